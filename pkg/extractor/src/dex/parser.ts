/** DEX container parsing: strings, types, protos, methods, classes, code.
 * https://source.android.com/docs/core/runtime/dex-format
 */

import { BufferReader } from "../bufferReader.js";

export const NO_INDEX = 0xffffffff;
const ENDIAN_CONSTANT = 0x12345678;

export class DexError extends Error {}

export interface DexHeader {
  version: string;
  fileSize: number;
  stringIdsSize: number;
  stringIdsOff: number;
  typeIdsSize: number;
  typeIdsOff: number;
  protoIdsSize: number;
  protoIdsOff: number;
  fieldIdsSize: number;
  fieldIdsOff: number;
  methodIdsSize: number;
  methodIdsOff: number;
  classDefsSize: number;
  classDefsOff: number;
}

export interface DexMethod {
  classDesc: string;
  name: string;
  /** e.g. "(Ljava/lang/String;)V" */
  signature: string;
  codeOff: number;
  registersSize: number;
  /** raw 16-bit code units; empty for abstract/native methods */
  insns: Uint16Array;
}

export interface DexClass {
  descriptor: string;
  superclass: string | null;
  methods: DexMethod[];
}

export class DexFile {
  readonly header: DexHeader;
  private reader: BufferReader;
  private stringCache = new Map<number, string>();

  constructor(readonly bytes: Uint8Array) {
    this.reader = new BufferReader(bytes);
    this.header = this.readHeader();
  }

  private readHeader(): DexHeader {
    if (this.bytes.length < 0x70) throw new DexError("file smaller than a dex header");
    const r = this.reader.seek(0);
    const magic = r.take(8);
    const tag = String.fromCharCode(...magic.subarray(0, 4));
    if (tag !== "dex\n" || magic[7] !== 0) throw new DexError("bad dex magic");
    const version = String.fromCharCode(...magic.subarray(4, 7));
    r.u32(); // checksum
    r.take(20); // sha-1 signature
    const fileSize = r.u32();
    const headerSize = r.u32();
    if (headerSize < 0x70) throw new DexError(`bad header size ${headerSize}`);
    const endian = r.u32();
    if (endian !== ENDIAN_CONSTANT) throw new DexError(`unsupported endian tag ${endian.toString(16)}`);
    r.u32(); r.u32(); // link size/off
    r.u32(); // map off
    const stringIdsSize = r.u32();
    const stringIdsOff = r.u32();
    const typeIdsSize = r.u32();
    const typeIdsOff = r.u32();
    const protoIdsSize = r.u32();
    const protoIdsOff = r.u32();
    const fieldIdsSize = r.u32();
    const fieldIdsOff = r.u32();
    const methodIdsSize = r.u32();
    const methodIdsOff = r.u32();
    const classDefsSize = r.u32();
    const classDefsOff = r.u32();
    return {
      version, fileSize, stringIdsSize, stringIdsOff, typeIdsSize, typeIdsOff,
      protoIdsSize, protoIdsOff, fieldIdsSize, fieldIdsOff,
      methodIdsSize, methodIdsOff, classDefsSize, classDefsOff,
    };
  }

  getString(index: number): string {
    const cached = this.stringCache.get(index);
    if (cached !== undefined) return cached;
    if (index >= this.header.stringIdsSize) throw new DexError(`string index ${index} out of range`);
    const dataOff = this.reader.at(this.header.stringIdsOff + index * 4).u32();
    const r = this.reader.at(dataOff);
    const utf16Len = r.uleb128();
    const value = decodeMutf8(r, utf16Len);
    this.stringCache.set(index, value);
    return value;
  }

  getTypeDescriptor(index: number): string {
    if (index >= this.header.typeIdsSize) throw new DexError(`type index ${index} out of range`);
    return this.getString(this.reader.at(this.header.typeIdsOff + index * 4).u32());
  }

  private getTypeList(offset: number): string[] {
    if (offset === 0) return [];
    const r = this.reader.at(offset);
    const size = r.u32();
    const out: string[] = [];
    for (let i = 0; i < size; i++) out.push(this.getTypeDescriptor(r.u16()));
    return out;
  }

  private getProtoSignature(index: number): string {
    if (index >= this.header.protoIdsSize) throw new DexError(`proto index ${index} out of range`);
    const r = this.reader.at(this.header.protoIdsOff + index * 12);
    r.u32(); // shorty
    const returnType = this.getTypeDescriptor(r.u32());
    const params = this.getTypeList(r.u32());
    return `(${params.join("")})${returnType}`;
  }

  private getMethodRef(index: number): { classDesc: string; name: string; signature: string } {
    if (index >= this.header.methodIdsSize) throw new DexError(`method index ${index} out of range`);
    const r = this.reader.at(this.header.methodIdsOff + index * 8);
    const classIdx = r.u16();
    const protoIdx = r.u16();
    const nameIdx = r.u32();
    return {
      classDesc: this.getTypeDescriptor(classIdx),
      name: this.getString(nameIdx),
      signature: this.getProtoSignature(protoIdx),
    };
  }

  private readCode(codeOff: number): { registersSize: number; insns: Uint16Array } {
    const r = this.reader.at(codeOff);
    const registersSize = r.u16();
    r.u16(); // ins
    r.u16(); // outs
    r.u16(); // tries
    r.u32(); // debug info
    const insnsSize = r.u32();
    const insns = new Uint16Array(insnsSize);
    for (let i = 0; i < insnsSize; i++) insns[i] = r.u16();
    return { registersSize, insns };
  }

  classes(): DexClass[] {
    const out: DexClass[] = [];
    for (let i = 0; i < this.header.classDefsSize; i++) {
      const r = this.reader.at(this.header.classDefsOff + i * 32);
      const classIdx = r.u32();
      r.u32(); // access flags
      const superIdx = r.u32();
      r.u32(); // interfaces
      r.u32(); // source file
      r.u32(); // annotations
      const classDataOff = r.u32();
      const descriptor = this.getTypeDescriptor(classIdx);
      const superclass = superIdx === NO_INDEX ? null : this.getTypeDescriptor(superIdx);
      const methods: DexMethod[] = [];
      if (classDataOff !== 0) {
        const data = this.reader.at(classDataOff);
        const staticFields = data.uleb128();
        const instanceFields = data.uleb128();
        const directMethods = data.uleb128();
        const virtualMethods = data.uleb128();
        for (let f = 0; f < staticFields + instanceFields; f++) {
          data.uleb128(); // field_idx_diff
          data.uleb128(); // access_flags
        }
        const readMethods = (count: number) => {
          let methodIndex = 0;
          for (let m = 0; m < count; m++) {
            methodIndex += data.uleb128();
            data.uleb128(); // access flags
            const codeOff = data.uleb128();
            const ref = this.getMethodRef(methodIndex);
            const code = codeOff === 0
              ? { registersSize: 0, insns: new Uint16Array(0) }
              : this.readCode(codeOff);
            methods.push({
              classDesc: ref.classDesc, name: ref.name, signature: ref.signature,
              codeOff, registersSize: code.registersSize, insns: code.insns,
            });
          }
        };
        readMethods(directMethods);
        readMethods(virtualMethods);
      }
      out.push({ descriptor, superclass, methods });
    }
    return out;
  }
}

/** Modified UTF-8: like CESU-8, and U+0000 is encoded as 0xC0 0x80. */
function decodeMutf8(r: BufferReader, utf16Len: number): string {
  const units: number[] = [];
  while (units.length < utf16Len) {
    const a = r.u8();
    if (a === 0) throw new DexError("premature NUL inside mutf-8 string");
    if (a < 0x80) {
      units.push(a);
    } else if ((a & 0xe0) === 0xc0) {
      const b = r.u8();
      units.push(((a & 0x1f) << 6) | (b & 0x3f));
    } else if ((a & 0xf0) === 0xe0) {
      const b = r.u8();
      const c = r.u8();
      units.push(((a & 0x0f) << 12) | ((b & 0x3f) << 6) | (c & 0x3f));
    } else {
      throw new DexError(`invalid mutf-8 lead byte 0x${a.toString(16)}`);
    }
  }
  if (r.u8() !== 0) throw new DexError("mutf-8 string not NUL-terminated");
  return String.fromCharCode(...units);
}
