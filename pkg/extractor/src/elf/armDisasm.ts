/** Minimal ARM (A32) instruction classification.
 *
 * Produces one lowercase mnemonic token per 4-byte word plus branch-link
 * targets; only the major encoding classes are distinguished, which is
 * all the call-graph extraction needs.
 * https://developer.arm.com/documentation/ddi0406/latest (A32 encodings)
 */

export interface ArmInstruction {
  addr: number;
  word: number;
  mnemonic: string;
  /** absolute target of a bl/blx immediate, else null */
  callTarget: number | null;
}

const DATA_OPS = ["and", "eor", "sub", "rsb", "add", "adc", "sbc", "rsc",
                  "tst", "teq", "cmp", "cmn", "orr", "mov", "bic", "mvn"];

function signExtend24(v: number): number {
  return (v << 8) >> 8;
}

export function decodeWord(addr: number, word: number): ArmInstruction {
  const cond = (word >>> 28) & 0xf;
  const cls = (word >>> 25) & 0x7;
  let mnemonic = "unknown";
  let callTarget: number | null = null;

  if (cond === 0xf) {
    if (((word >>> 25) & 0x7) === 0x5) {
      // BLX (immediate), switches to thumb; record the call edge anyway
      mnemonic = "blx";
      callTarget = (addr + 8 + signExtend24(word & 0xffffff) * 4) & ~1;
    } else {
      mnemonic = "unconditional-ext";
    }
  } else if (cls === 0b101) {
    const link = (word >>> 24) & 1;
    mnemonic = link ? "bl" : "b";
    const target = addr + 8 + signExtend24(word & 0xffffff) * 4;
    if (link) callTarget = target;
  } else if ((word & 0x0ffffff0) === 0x012fff10) {
    mnemonic = "bx";
  } else if ((word & 0x0ffffff0) === 0x012fff30) {
    mnemonic = "blx"; // register form, target unknown
  } else if (cls === 0b000 && ((word >>> 4) & 0xf) === 0b1001 && ((word >>> 22) & 0x3f) === 0) {
    mnemonic = ((word >>> 21) & 1) === 1 ? "mla" : "mul";
  } else if (cls === 0b000 && ((word >>> 4) & 0x9) === 0x9 && ((word >>> 5) & 0x3) !== 0) {
    mnemonic = ((word >>> 20) & 1) === 1 ? "ldrh" : "strh";
  } else if (cls === 0b000 || cls === 0b001) {
    const isMsr = (word & 0x0fb00000) === 0x03200000 || (word & 0x0fb000f0) === 0x01200000;
    const isMrs = (word & 0x0fbf0fff) === 0x010f0000;
    if (isMrs) mnemonic = "mrs";
    else if (isMsr) mnemonic = "msr";
    else mnemonic = DATA_OPS[(word >>> 21) & 0xf];
  } else if (cls === 0b010 || cls === 0b011) {
    const load = (word >>> 20) & 1;
    const byte = (word >>> 22) & 1;
    mnemonic = `${load ? "ldr" : "str"}${byte ? "b" : ""}`;
  } else if (cls === 0b100) {
    mnemonic = ((word >>> 20) & 1) === 1 ? "ldm" : "stm";
  } else if (cls === 0b110) {
    mnemonic = ((word >>> 20) & 1) === 1 ? "ldc" : "stc";
  } else if (cls === 0b111) {
    if (((word >>> 24) & 0xf) === 0xf) mnemonic = "svc";
    else if (((word >>> 4) & 1) === 1) mnemonic = ((word >>> 20) & 1) === 1 ? "mrc" : "mcr";
    else mnemonic = "cdp";
  }
  return { addr, word, mnemonic, callTarget };
}

export function disassembleRange(bytes: Uint8Array, fileOffset: number,
                                 addr: number, size: number): ArmInstruction[] {
  const out: ArmInstruction[] = [];
  const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength);
  const count = Math.floor(size / 4);
  for (let i = 0; i < count; i++) {
    const word = view.getUint32(fileOffset + i * 4, true);
    out.push(decodeWord(addr + i * 4, word));
  }
  return out;
}
