/** ELF32 little-endian shared-object parsing: sections and function symbols.
 * https://refspecs.linuxfoundation.org/elf/elf.pdf
 */

import { BufferReader } from "../bufferReader.js";

export class ElfError extends Error {}

export const EM_ARM = 40;
const ET_DYN = 3;
const SHT_SYMTAB = 2;
const SHT_STRTAB = 3;
const SHT_DYNSYM = 11;
const STT_FUNC = 2;

export interface ElfSection {
  name: string;
  type: number;
  flags: number;
  addr: number;
  offset: number;
  size: number;
  link: number;
  entsize: number;
}

export interface ElfFunction {
  name: string;
  /** virtual address (thumb bit already cleared) */
  addr: number;
  size: number;
  thumb: boolean;
  sectionIndex: number;
}

export interface ElfFile {
  machine: number;
  isSharedObject: boolean;
  sections: ElfSection[];
  functions: ElfFunction[];
  bytes: Uint8Array;
}

export function parseElf(bytes: Uint8Array): ElfFile {
  if (bytes.length < 52) throw new ElfError("file smaller than an ELF32 header");
  if (!(bytes[0] === 0x7f && bytes[1] === 0x45 && bytes[2] === 0x4c && bytes[3] === 0x46)) {
    throw new ElfError("bad ELF magic");
  }
  if (bytes[4] !== 1) throw new ElfError(`unsupported ELF class ${bytes[4]} (need 32-bit)`);
  if (bytes[5] !== 1) throw new ElfError(`unsupported byte order ${bytes[5]} (need little-endian)`);

  const r = new BufferReader(bytes);
  r.seek(16);
  const type = r.u16();
  const machine = r.u16();
  r.u32(); // version
  r.u32(); // entry
  r.u32(); // phoff
  const shoff = r.u32();
  r.u32(); // flags
  r.u16(); // ehsize
  r.u16(); // phentsize
  r.u16(); // phnum
  const shentsize = r.u16();
  const shnum = r.u16();
  const shstrndx = r.u16();

  if (shoff === 0 || shnum === 0) throw new ElfError("no section headers");

  const rawSections: Omit<ElfSection, "name">[] = [];
  const nameOffsets: number[] = [];
  for (let i = 0; i < shnum; i++) {
    const s = r.at(shoff + i * shentsize);
    nameOffsets.push(s.u32());
    const sType = s.u32();
    const flags = s.u32();
    const addr = s.u32();
    const offset = s.u32();
    const size = s.u32();
    const link = s.u32();
    s.u32(); // info
    s.u32(); // addralign
    const entsize = s.u32();
    rawSections.push({ type: sType, flags, addr, offset, size, link, entsize });
  }

  const readName = (strSection: Omit<ElfSection, "name">, nameOff: number): string => {
    let end = strSection.offset + nameOff;
    while (end < bytes.length && bytes[end] !== 0) end++;
    return new TextDecoder().decode(bytes.subarray(strSection.offset + nameOff, end));
  };

  if (shstrndx >= rawSections.length) throw new ElfError("bad section name table index");
  const shstr = rawSections[shstrndx];
  const sections: ElfSection[] = rawSections.map((s, i) => ({ ...s, name: readName(shstr, nameOffsets[i]) }));

  const symtabIndex = sections.findIndex((s) => s.type === SHT_SYMTAB);
  const dynsymIndex = sections.findIndex((s) => s.type === SHT_DYNSYM);
  const symIndex = symtabIndex >= 0 ? symtabIndex : dynsymIndex;

  const functions: ElfFunction[] = [];
  if (symIndex >= 0) {
    const sym = sections[symIndex];
    const str = sections[sym.link];
    if (!str || str.type !== SHT_STRTAB) throw new ElfError("symbol table without a string table");
    const entsize = sym.entsize || 16;
    const count = Math.floor(sym.size / entsize);
    for (let i = 0; i < count; i++) {
      const s = r.at(sym.offset + i * entsize);
      const nameOff = s.u32();
      const value = s.u32();
      const size = s.u32();
      const info = s.u8();
      s.u8(); // other
      const shndx = s.u16();
      if ((info & 0xf) !== STT_FUNC || size === 0) continue;
      functions.push({
        name: readName(str, nameOff),
        addr: value & ~1,
        size,
        thumb: (value & 1) === 1,
        sectionIndex: shndx,
      });
    }
  }
  functions.sort((a, b) => a.addr - b.addr || (a.name < b.name ? -1 : 1));

  return { machine, isSharedObject: type === ET_DYN, sections, functions, bytes };
}

/** File offset for a virtual address inside a known section, or -1. */
export function fileOffsetOf(elf: ElfFile, addr: number): number {
  for (const section of elf.sections) {
    if (section.addr !== 0 && addr >= section.addr && addr < section.addr + section.size) {
      return section.offset + (addr - section.addr);
    }
  }
  return -1;
}
