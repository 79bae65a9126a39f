/** Hand-assembled binary fixtures: a minimal APK with one DEX class and
 * a two-function ARM shared object, built byte by byte so the extractor
 * is exercised against real container layouts.
 */

import { createHash } from "node:crypto";

export class ByteWriter {
  private bytes: number[] = [];

  get length(): number {
    return this.bytes.length;
  }

  u8(v: number): this {
    this.bytes.push(v & 0xff);
    return this;
  }

  u16(v: number): this {
    return this.u8(v).u8(v >>> 8);
  }

  u32(v: number): this {
    return this.u16(v).u16(v >>> 16);
  }

  raw(data: Uint8Array | number[]): this {
    for (const b of data) this.bytes.push(b & 0xff);
    return this;
  }

  ascii(s: string): this {
    for (const ch of s) this.bytes.push(ch.charCodeAt(0));
    return this;
  }

  uleb128(v: number): this {
    do {
      let byte = v & 0x7f;
      v >>>= 7;
      if (v !== 0) byte |= 0x80;
      this.u8(byte);
    } while (v !== 0);
    return this;
  }

  align(n: number): this {
    while (this.bytes.length % n !== 0) this.bytes.push(0);
    return this;
  }

  patchU32(offset: number, v: number): this {
    this.bytes[offset] = v & 0xff;
    this.bytes[offset + 1] = (v >>> 8) & 0xff;
    this.bytes[offset + 2] = (v >>> 16) & 0xff;
    this.bytes[offset + 3] = (v >>> 24) & 0xff;
    return this;
  }

  toUint8Array(): Uint8Array {
    return Uint8Array.from(this.bytes);
  }
}

function adler32(bytes: Uint8Array, from: number): number {
  let a = 1;
  let b = 0;
  for (let i = from; i < bytes.length; i++) {
    a = (a + bytes[i]) % 65521;
    b = (b + a) % 65521;
  }
  return ((b << 16) | a) >>> 0;
}

const NO_INDEX = 0xffffffff;

/** One class LHelloWorld; with static methods greet()V and main()V.
 * main branches (if-eqz) and re-joins, giving four basic blocks with a
 * cross-block register def-use from the entry block to the join block.
 */
export function buildHelloDex(): Uint8Array {
  const strings = ["LHelloWorld;", "Ljava/lang/Object;", "V", "greet", "main"];
  const w = new ByteWriter();

  // ---- header (patched later where marked)
  w.ascii("dex\n035\0");
  const checksumAt = w.length; w.u32(0);
  const signatureAt = w.length; w.raw(new Array(20).fill(0));
  const fileSizeAt = w.length; w.u32(0);
  w.u32(0x70);        // header size
  w.u32(0x12345678);  // endian tag
  w.u32(0); w.u32(0); // link size/off
  const mapOffAt = w.length; w.u32(0);
  w.u32(strings.length); w.u32(0x70);
  w.u32(3); w.u32(0x84);   // type ids
  w.u32(1); w.u32(0x90);   // proto ids
  w.u32(0); w.u32(0);      // field ids
  w.u32(2); w.u32(0x9c);   // method ids
  w.u32(1); w.u32(0xac);   // class defs
  const dataSizeAt = w.length; w.u32(0);
  w.u32(0xcc);             // data off
  if (w.length !== 0x70) throw new Error(`header is ${w.length} bytes`);

  // ---- index sections (offsets patched after data layout)
  const stringIdAt = w.length;
  for (let i = 0; i < strings.length; i++) w.u32(0);
  for (const stringIdx of [0, 1, 2]) w.u32(stringIdx);        // type ids
  w.u32(2); w.u32(2); w.u32(0);                               // proto: shorty "V", returns V, no params
  w.u16(0); w.u16(0); w.u32(3);                               // method 0: HelloWorld.greet()V
  w.u16(0); w.u16(0); w.u32(4);                               // method 1: HelloWorld.main()V
  const classDefAt = w.length;
  w.u32(0);        // class LHelloWorld;
  w.u32(0x1);      // public
  w.u32(1);        // extends Ljava/lang/Object;
  w.u32(0);        // no interfaces
  w.u32(NO_INDEX); // no source file
  w.u32(0);        // no annotations
  const classDataOffAt = w.length; w.u32(0);
  w.u32(0);        // no static values
  if (w.length !== 0xcc) throw new Error(`index sections end at ${w.length}`);

  // ---- data section
  const stringOffsets: number[] = [];
  for (const s of strings) {
    stringOffsets.push(w.length);
    w.uleb128(s.length).ascii(s).u8(0);
  }

  w.align(4);
  const greetCodeOff = w.length;
  w.u16(1);  // registers
  w.u16(0).u16(0).u16(0); // ins, outs, tries
  w.u32(0);  // debug info
  const greetInsns = [0x0012, 0x000e]; // const/4 v0,#0 ; return-void
  w.u32(greetInsns.length);
  for (const unit of greetInsns) w.u16(unit);

  w.align(4);
  const mainCodeOff = w.length;
  w.u16(3);  // registers
  w.u16(0).u16(0).u16(0);
  w.u32(0);
  const mainInsns = [
    0x1012,         // 0: const/4 v0, #1
    0x0038, 0x0004, // 1: if-eqz v0, +4      -> unit 5
    0x2112,         // 3: const/4 v1, #2
    0x0328,         // 4: goto +3            -> unit 7
    0x3112,         // 5: const/4 v1, #3
    0x0000,         // 6: nop
    0x0290, 0x0100, // 7: add-int v2, v0, v1
    0x000e,         // 9: return-void
  ];
  w.u32(mainInsns.length);
  for (const unit of mainInsns) w.u16(unit);

  const classDataOff = w.length;
  w.uleb128(0).uleb128(0).uleb128(2).uleb128(0);
  w.uleb128(0).uleb128(0x9).uleb128(greetCodeOff); // greet: public static
  w.uleb128(1).uleb128(0x9).uleb128(mainCodeOff);  // main

  w.align(4);
  const mapOff = w.length;
  const mapEntries: [number, number, number][] = [
    [0x0000, 1, 0],              // header
    [0x0001, strings.length, 0x70],
    [0x0002, 3, 0x84],
    [0x0003, 1, 0x90],
    [0x0005, 2, 0x9c],
    [0x0006, 1, 0xac],
    [0x2002, strings.length, stringOffsets[0]],
    [0x2001, 2, greetCodeOff],
    [0x2000, 1, classDataOff],
    [0x1000, 1, mapOff],
  ];
  w.u32(mapEntries.length);
  for (const [type, count, offset] of mapEntries) {
    w.u16(type).u16(0).u32(count).u32(offset);
  }

  // ---- patches and digests
  for (let i = 0; i < strings.length; i++) w.patchU32(stringIdAt + i * 4, stringOffsets[i]);
  w.patchU32(classDataOffAt, classDataOff);
  w.patchU32(mapOffAt, mapOff);
  w.patchU32(fileSizeAt, w.length);
  w.patchU32(dataSizeAt, w.length - 0xcc);

  const bytes = w.toUint8Array();
  const sha = createHash("sha1").update(bytes.subarray(32)).digest();
  bytes.set(sha, signatureAt);
  const sum = adler32(bytes, 12);
  bytes[checksumAt] = sum & 0xff;
  bytes[checksumAt + 1] = (sum >>> 8) & 0xff;
  bytes[checksumAt + 2] = (sum >>> 16) & 0xff;
  bytes[checksumAt + 3] = (sum >>> 24) & 0xff;
  return bytes;
}

/** ELF32 shared object with funcA calling funcB, both plain ARM. */
export function buildHelloSo(machine = 40): Uint8Array {
  const textAddr = 0x1000;
  const text = [
    // funcA @ 0x1000, 20 bytes
    0xe92d4000, // stmdb sp!, {lr}
    0xe3a00000, // mov r0, #0
    0xeb000001, // bl 0x1014 (funcB)
    0xe8bd8000, // ldmia sp!, {pc}
    0xe12fff1e, // bx lr
    // funcB @ 0x1014, 8 bytes
    0xe3a00001, // mov r0, #1
    0xe12fff1e, // bx lr
  ];
  const textBytes = new ByteWriter();
  for (const word of text) textBytes.u32(word);

  const strtab = new ByteWriter().u8(0).ascii("funcA").u8(0).ascii("funcB").u8(0);
  const shstrtab = new ByteWriter()
    .u8(0).ascii(".text").u8(0).ascii(".symtab").u8(0).ascii(".strtab").u8(0).ascii(".shstrtab").u8(0);

  const symtab = new ByteWriter();
  symtab.u32(0).u32(0).u32(0).u8(0).u8(0).u16(0); // null symbol
  symtab.u32(1).u32(textAddr).u32(20).u8(0x12).u8(0).u16(1);      // funcA, GLOBAL FUNC
  symtab.u32(7).u32(textAddr + 20).u32(8).u8(0x12).u8(0).u16(1);  // funcB

  const w = new ByteWriter();
  w.raw([0x7f, 0x45, 0x4c, 0x46, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0]);
  w.u16(3);        // ET_DYN
  w.u16(machine);
  w.u32(1);        // version
  w.u32(0);        // entry
  w.u32(0);        // phoff
  const shoffAt = w.length; w.u32(0);
  w.u32(0x05000000); // EABI v5 flags
  w.u16(52);       // ehsize
  w.u16(0).u16(0); // phentsize, phnum
  w.u16(40);       // shentsize
  w.u16(5);        // shnum
  w.u16(4);        // shstrndx

  const textOff = w.length;
  w.raw(textBytes.toUint8Array());
  const symtabOff = w.length;
  w.raw(symtab.toUint8Array());
  const strtabOff = w.length;
  w.raw(strtab.toUint8Array());
  const shstrtabOff = w.length;
  w.raw(shstrtab.toUint8Array());
  w.align(4);
  w.patchU32(shoffAt, w.length);

  const writeSection = (nameOff: number, type: number, flags: number, addr: number,
                        offset: number, size: number, link: number, info: number,
                        addralign: number, entsize: number) => {
    w.u32(nameOff).u32(type).u32(flags).u32(addr).u32(offset)
      .u32(size).u32(link).u32(info).u32(addralign).u32(entsize);
  };
  writeSection(0, 0, 0, 0, 0, 0, 0, 0, 0, 0);
  writeSection(1, 1, 0x6, textAddr, textOff, textBytes.length, 0, 0, 4, 0);   // .text
  writeSection(7, 2, 0, 0, symtabOff, symtab.length, 3, 1, 4, 16);            // .symtab
  writeSection(15, 3, 0, 0, strtabOff, strtab.length, 0, 0, 1, 0);            // .strtab
  writeSection(23, 3, 0, 0, shstrtabOff, shstrtab.length, 0, 0, 1, 0);        // .shstrtab
  return w.toUint8Array();
}

const CRC_TABLE = (() => {
  const table = new Uint32Array(256);
  for (let n = 0; n < 256; n++) {
    let c = n;
    for (let k = 0; k < 8; k++) c = c & 1 ? 0xedb88320 ^ (c >>> 1) : c >>> 1;
    table[n] = c >>> 0;
  }
  return table;
})();

function crc32(bytes: Uint8Array): number {
  let crc = 0xffffffff;
  for (const b of bytes) crc = CRC_TABLE[(crc ^ b) & 0xff] ^ (crc >>> 8);
  return (crc ^ 0xffffffff) >>> 0;
}

/** Stored-only ZIP archive, enough to be a loadable APK shell. */
export function buildZip(entries: { name: string; data: Uint8Array }[]): Uint8Array {
  const w = new ByteWriter();
  const central: { name: string; crc: number; size: number; offset: number }[] = [];
  for (const { name, data } of entries) {
    const offset = w.length;
    const crc = crc32(data);
    w.u32(0x04034b50);
    w.u16(20).u16(0).u16(0);  // version, flags, method=stored
    w.u16(0).u16(0);          // time, date
    w.u32(crc).u32(data.length).u32(data.length);
    w.u16(name.length).u16(0);
    w.ascii(name).raw(data);
    central.push({ name, crc, size: data.length, offset });
  }
  const centralStart = w.length;
  for (const e of central) {
    w.u32(0x02014b50);
    w.u16(20).u16(20).u16(0).u16(0);
    w.u16(0).u16(0);
    w.u32(e.crc).u32(e.size).u32(e.size);
    w.u16(e.name.length).u16(0).u16(0);
    w.u16(0).u16(0).u32(0);
    w.u32(e.offset);
    w.ascii(e.name);
  }
  const centralSize = w.length - centralStart;
  w.u32(0x06054b50);
  w.u16(0).u16(0);
  w.u16(central.length).u16(central.length);
  w.u32(centralSize).u32(centralStart);
  w.u16(0);
  return w.toUint8Array();
}

export function buildHelloApk(options: { withNative?: boolean; nativeMachine?: number } = {}): Uint8Array {
  const entries = [{ name: "classes.dex", data: buildHelloDex() }];
  if (options.withNative ?? true) {
    entries.push({
      name: "lib/armeabi-v7a/libhello.so",
      data: buildHelloSo(options.nativeMachine ?? 40),
    });
  }
  return buildZip(entries);
}
