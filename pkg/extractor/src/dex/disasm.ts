/** Dalvik instruction decoding and basic-block recovery.
 *
 * Register defs/uses are tracked at plain register granularity: wide
 * values count as their first register, which is enough for block-level
 * def-use edges.
 */

import {
  FILL_ARRAY_PAYLOAD,
  FORMAT_WIDTH,
  OPCODES,
  PACKED_SWITCH_PAYLOAD,
  SPARSE_SWITCH_PAYLOAD,
} from "./opcodes.js";
import { DexError } from "./parser.js";

export interface Instruction {
  /** position in 16-bit code units */
  offset: number;
  width: number;
  opcode: number;
  name: string;
  defs: number[];
  uses: number[];
  /** absolute unit offsets this instruction can branch to */
  branchTargets: number[];
  /** conditional branches and plain instructions continue to the next one */
  fallsThrough: boolean;
}

export interface BasicBlock {
  index: number;
  startUnit: number;
  instructions: Instruction[];
  successors: number[];
}

function s8(v: number): number {
  return (v << 24) >> 24;
}

function s16(v: number): number {
  return (v << 16) >> 16;
}

function s32(lo: number, hi: number): number {
  return (lo | (hi << 16)) | 0;
}

function payloadWidth(insns: Uint16Array, at: number, ident: number): number {
  switch (ident) {
    case PACKED_SWITCH_PAYLOAD:
      return insns[at + 1] * 2 + 4;
    case SPARSE_SWITCH_PAYLOAD:
      return insns[at + 1] * 4 + 2;
    case FILL_ARRAY_PAYLOAD: {
      const elementWidth = insns[at + 1];
      const size = s32(insns[at + 2], insns[at + 3]) >>> 0;
      return Math.ceil((size * elementWidth) / 2) + 4;
    }
    default:
      throw new DexError(`unknown payload ident 0x${ident.toString(16)} at unit ${at}`);
  }
}

function switchTargets(insns: Uint16Array, switchOffset: number, tableOffset: number): number[] {
  const ident = insns[tableOffset];
  const size = insns[tableOffset + 1];
  const targets: number[] = [];
  if (ident === PACKED_SWITCH_PAYLOAD) {
    for (let i = 0; i < size; i++) {
      targets.push(switchOffset + s32(insns[tableOffset + 4 + 2 * i], insns[tableOffset + 5 + 2 * i]));
    }
  } else if (ident === SPARSE_SWITCH_PAYLOAD) {
    const base = tableOffset + 2 + 2 * size;
    for (let i = 0; i < size; i++) {
      targets.push(switchOffset + s32(insns[base + 2 * i], insns[base + 1 + 2 * i]));
    }
  } else {
    throw new DexError(`switch at unit ${switchOffset} points at non-switch payload`);
  }
  return targets;
}

function operandRegisters(format: string, u0: number, u1: number, u2: number) {
  switch (format) {
    case "12x":
      return { a: (u0 >> 8) & 0xf, b: u0 >> 12, c: -1 };
    case "11n":
      return { a: (u0 >> 8) & 0xf, b: -1, c: -1 };
    case "11x":
    case "21s":
    case "21h":
    case "21c":
    case "31i":
    case "31c":
    case "51l":
    case "21t":
    case "31t":
      return { a: u0 >> 8, b: -1, c: -1 };
    case "22x":
      return { a: u0 >> 8, b: u1, c: -1 };
    case "32x":
      return { a: u1, b: u2, c: -1 };
    case "23x":
      return { a: u0 >> 8, b: u1 & 0xff, c: u1 >> 8 };
    case "22b":
      return { a: u0 >> 8, b: u1 & 0xff, c: -1 };
    case "22t":
    case "22s":
    case "22c":
      return { a: (u0 >> 8) & 0xf, b: u0 >> 12, c: -1 };
    default:
      return { a: -1, b: -1, c: -1 };
  }
}

function invokeArgs(format: string, u0: number, u2: number): number[] {
  if (format === "35c" || format === "45cc") {
    const count = u0 >> 12;
    const g = (u0 >> 8) & 0xf;
    const nibbles = [u2 & 0xf, (u2 >> 4) & 0xf, (u2 >> 8) & 0xf, (u2 >> 12) & 0xf, g];
    return nibbles.slice(0, Math.min(count, 5));
  }
  if (format === "3rc" || format === "4rcc") {
    const count = u0 >> 8;
    const first = u2;
    return Array.from({ length: count }, (_, i) => first + i);
  }
  return [];
}

function defsAndUses(opcode: number, format: string, u0: number, u1: number, u2: number) {
  const { a, b, c } = operandRegisters(format, u0, u1, u2);
  const defs: number[] = [];
  const uses: number[] = [];
  const use = (...regs: number[]) => regs.forEach((r) => r >= 0 && uses.push(r));
  const def = (...regs: number[]) => regs.forEach((r) => r >= 0 && defs.push(r));

  if (opcode >= 0x01 && opcode <= 0x09) {
    def(a); use(b);
  } else if (opcode >= 0x0a && opcode <= 0x0d) {
    def(a);
  } else if (opcode >= 0x0f && opcode <= 0x11) {
    use(a);
  } else if (opcode >= 0x12 && opcode <= 0x1c) {
    def(a);
  } else if (opcode === 0x1d || opcode === 0x1e || opcode === 0x1f) {
    use(a);
  } else if (opcode === 0x20 || opcode === 0x21 || opcode === 0x23) {
    def(a); use(b);
  } else if (opcode === 0x22) {
    def(a);
  } else if (opcode === 0x24 || opcode === 0x25 || opcode === 0xfa || opcode === 0xfb
             || opcode === 0xfc || opcode === 0xfd) {
    use(...invokeArgs(format, u0, u2));
  } else if (opcode === 0x26 || opcode === 0x27 || opcode === 0x2b || opcode === 0x2c) {
    use(a);
  } else if (opcode >= 0x2d && opcode <= 0x31) {
    def(a); use(b, c);
  } else if (opcode >= 0x32 && opcode <= 0x37) {
    use(a, b);
  } else if (opcode >= 0x38 && opcode <= 0x3d) {
    use(a);
  } else if (opcode >= 0x44 && opcode <= 0x4a) {
    def(a); use(b, c);
  } else if (opcode >= 0x4b && opcode <= 0x51) {
    use(a, b, c);
  } else if (opcode >= 0x52 && opcode <= 0x58) {
    def(a); use(b);
  } else if (opcode >= 0x59 && opcode <= 0x5f) {
    use(a, b);
  } else if (opcode >= 0x60 && opcode <= 0x66) {
    def(a);
  } else if (opcode >= 0x67 && opcode <= 0x6d) {
    use(a);
  } else if ((opcode >= 0x6e && opcode <= 0x72) || (opcode >= 0x74 && opcode <= 0x78)) {
    use(...invokeArgs(format, u0, u2));
  } else if (opcode >= 0x7b && opcode <= 0x8f) {
    def(a); use(b);
  } else if (opcode >= 0x90 && opcode <= 0xaf) {
    def(a); use(b, c);
  } else if (opcode >= 0xb0 && opcode <= 0xcf) {
    def(a); use(a, b);
  } else if (opcode >= 0xd0 && opcode <= 0xe2) {
    def(a); use(b);
  } else if (opcode === 0xfe || opcode === 0xff) {
    def(a);
  }
  return { defs, uses };
}

const RETURN_OPS = new Set([0x0e, 0x0f, 0x10, 0x11]);
const GOTO_OPS = new Set([0x28, 0x29, 0x2a]);
const IF_OPS = new Set([0x32, 0x33, 0x34, 0x35, 0x36, 0x37, 0x38, 0x39, 0x3a, 0x3b, 0x3c, 0x3d]);
const SWITCH_OPS = new Set([0x2b, 0x2c]);
const THROW_OP = 0x27;

export function decodeMethod(insns: Uint16Array): Instruction[] {
  const out: Instruction[] = [];
  let at = 0;
  while (at < insns.length) {
    const u0 = insns[at];
    const opcode = u0 & 0xff;
    if (opcode === 0x00 && u0 >> 8 !== 0) {
      at += payloadWidth(insns, at, u0); // data payload, not executable
      continue;
    }
    const info = OPCODES[opcode];
    const width = FORMAT_WIDTH[info.format];
    if (at + width > insns.length) {
      throw new DexError(`instruction ${info.name} at unit ${at} overruns the method`);
    }
    const u1 = width > 1 ? insns[at + 1] : 0;
    const u2 = width > 2 ? insns[at + 2] : 0;

    const branchTargets: number[] = [];
    let fallsThrough = !RETURN_OPS.has(opcode) && opcode !== THROW_OP && !GOTO_OPS.has(opcode);
    if (opcode === 0x28) branchTargets.push(at + s8(u0 >> 8));
    else if (opcode === 0x29) branchTargets.push(at + s16(u1));
    else if (opcode === 0x2a) branchTargets.push(at + s32(u1, u2));
    else if (IF_OPS.has(opcode)) branchTargets.push(at + s16(u1));
    else if (SWITCH_OPS.has(opcode)) branchTargets.push(...switchTargets(insns, at, at + s32(u1, u2)));

    const { defs, uses } = defsAndUses(opcode, info.format, u0, u1, u2);
    out.push({ offset: at, width, opcode, name: info.name, defs, uses, branchTargets, fallsThrough });
    at += width;
  }
  return out;
}

export function buildBlocks(instructions: Instruction[]): BasicBlock[] {
  if (instructions.length === 0) return [];
  const leaders = new Set<number>([instructions[0].offset]);
  for (const insn of instructions) {
    for (const target of insn.branchTargets) leaders.add(target);
    if (insn.branchTargets.length > 0 || !insn.fallsThrough) {
      leaders.add(insn.offset + insn.width); // block boundary after any control transfer
    }
  }

  const blocks: BasicBlock[] = [];
  const blockOfUnit = new Map<number, number>();
  let current: BasicBlock | null = null;
  for (const insn of instructions) {
    if (leaders.has(insn.offset) || current === null) {
      current = { index: blocks.length, startUnit: insn.offset, instructions: [], successors: [] };
      blocks.push(current);
    }
    current.instructions.push(insn);
    blockOfUnit.set(insn.offset, current.index);
  }

  for (const block of blocks) {
    const last = block.instructions[block.instructions.length - 1];
    const successors = new Set<number>();
    for (const target of last.branchTargets) {
      const idx = blockOfUnit.get(target);
      if (idx === undefined) throw new DexError(`branch to unit ${target} lands between instructions`);
      successors.add(idx);
    }
    if (last.fallsThrough) {
      const idx = blockOfUnit.get(last.offset + last.width);
      if (idx !== undefined) successors.add(idx);
    }
    block.successors = [...successors].sort((a, b) => a - b);
  }
  return blocks;
}

/** Inter-block def-use pairs: a block defining a register reaches every
 * block that uses it before redefining it (reaching definitions). */
export function defUseEdges(blocks: BasicBlock[]): [number, number][] {
  const gen = blocks.map((b) => new Set<number>());
  const killRegs = blocks.map((b) => new Set<number>());
  const upwardUses = blocks.map((b) => new Set<number>());
  for (const block of blocks) {
    const defined = new Set<number>();
    for (const insn of block.instructions) {
      for (const reg of insn.uses) {
        if (!defined.has(reg)) upwardUses[block.index].add(reg);
      }
      for (const reg of insn.defs) defined.add(reg);
    }
    killRegs[block.index] = defined;
    gen[block.index] = defined;
  }

  // IN/OUT: per register, the set of blocks whose definition reaches here
  const inSets = blocks.map(() => new Map<number, Set<number>>());
  const outSets = blocks.map(() => new Map<number, Set<number>>());
  const preds: number[][] = blocks.map(() => []);
  for (const block of blocks) {
    for (const succ of block.successors) preds[succ].push(block.index);
  }

  const recomputeOut = (i: number): boolean => {
    const next = new Map<number, Set<number>>();
    for (const [reg, sources] of inSets[i]) {
      if (!killRegs[i].has(reg)) next.set(reg, new Set(sources));
    }
    for (const reg of gen[i]) next.set(reg, new Set([i]));
    let changed = next.size !== outSets[i].size;
    if (!changed) {
      for (const [reg, sources] of next) {
        const old = outSets[i].get(reg);
        if (!old || old.size !== sources.size || [...sources].some((s) => !old.has(s))) {
          changed = true;
          break;
        }
      }
    }
    outSets[i] = next;
    return changed;
  };

  const work = blocks.map((b) => b.index);
  while (work.length > 0) {
    const i = work.shift()!;
    const merged = new Map<number, Set<number>>();
    for (const p of preds[i]) {
      for (const [reg, sources] of outSets[p]) {
        const bucket = merged.get(reg) ?? new Set<number>();
        for (const s of sources) bucket.add(s);
        merged.set(reg, bucket);
      }
    }
    inSets[i] = merged;
    if (recomputeOut(i)) {
      for (const succ of blocks[i].successors) {
        if (!work.includes(succ)) work.push(succ);
      }
    }
  }

  const edges = new Set<string>();
  for (const block of blocks) {
    for (const reg of upwardUses[block.index]) {
      const sources = inSets[block.index].get(reg);
      if (!sources) continue;
      for (const source of sources) {
        if (source !== block.index) edges.add(`${source}:${block.index}`);
      }
    }
  }
  return [...edges].map((key) => {
    const [src, dst] = key.split(":");
    return [Number(src), Number(dst)] as [number, number];
  });
}
