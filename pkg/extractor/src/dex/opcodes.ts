/** Dalvik opcode table: mnemonic and instruction format per opcode byte.
 * https://source.android.com/docs/core/runtime/dalvik-bytecode
 * https://source.android.com/docs/core/runtime/instruction-formats
 */

export interface OpcodeInfo {
  name: string;
  format: string;
}

/** Code units (16-bit) occupied by each format. */
export const FORMAT_WIDTH: Record<string, number> = {
  "10x": 1, "12x": 1, "11n": 1, "11x": 1, "10t": 1,
  "20t": 2, "20bc": 2, "22x": 2, "21t": 2, "21s": 2, "21h": 2, "21c": 2,
  "23x": 2, "22b": 2, "22t": 2, "22s": 2, "22c": 2, "22cs": 2,
  "30t": 3, "32x": 3, "31i": 3, "31t": 3, "31c": 3,
  "35c": 3, "35ms": 3, "35mi": 3, "3rc": 3, "3rms": 3, "3rmi": 3,
  "45cc": 4, "4rcc": 4,
  "51l": 5,
};

const TABLE: OpcodeInfo[] = new Array(256);

function op(code: number, name: string, format: string) {
  TABLE[code] = { name, format };
}

function run(start: number, names: string[], format: string) {
  names.forEach((name, i) => op(start + i, name, format));
}

op(0x00, "nop", "10x");
op(0x01, "move", "12x");
op(0x02, "move/from16", "22x");
op(0x03, "move/16", "32x");
op(0x04, "move-wide", "12x");
op(0x05, "move-wide/from16", "22x");
op(0x06, "move-wide/16", "32x");
op(0x07, "move-object", "12x");
op(0x08, "move-object/from16", "22x");
op(0x09, "move-object/16", "32x");
run(0x0a, ["move-result", "move-result-wide", "move-result-object", "move-exception"], "11x");
op(0x0e, "return-void", "10x");
run(0x0f, ["return", "return-wide", "return-object"], "11x");
op(0x12, "const/4", "11n");
op(0x13, "const/16", "21s");
op(0x14, "const", "31i");
op(0x15, "const/high16", "21h");
op(0x16, "const-wide/16", "21s");
op(0x17, "const-wide/32", "31i");
op(0x18, "const-wide", "51l");
op(0x19, "const-wide/high16", "21h");
op(0x1a, "const-string", "21c");
op(0x1b, "const-string/jumbo", "31c");
op(0x1c, "const-class", "21c");
op(0x1d, "monitor-enter", "11x");
op(0x1e, "monitor-exit", "11x");
op(0x1f, "check-cast", "21c");
op(0x20, "instance-of", "22c");
op(0x21, "array-length", "12x");
op(0x22, "new-instance", "21c");
op(0x23, "new-array", "22c");
op(0x24, "filled-new-array", "35c");
op(0x25, "filled-new-array/range", "3rc");
op(0x26, "fill-array-data", "31t");
op(0x27, "throw", "11x");
op(0x28, "goto", "10t");
op(0x29, "goto/16", "20t");
op(0x2a, "goto/32", "30t");
op(0x2b, "packed-switch", "31t");
op(0x2c, "sparse-switch", "31t");
run(0x2d, ["cmpl-float", "cmpg-float", "cmpl-double", "cmpg-double", "cmp-long"], "23x");
run(0x32, ["if-eq", "if-ne", "if-lt", "if-ge", "if-gt", "if-le"], "22t");
run(0x38, ["if-eqz", "if-nez", "if-ltz", "if-gez", "if-gtz", "if-lez"], "21t");
run(0x3e, ["unused-3e", "unused-3f", "unused-40", "unused-41", "unused-42", "unused-43"], "10x");
run(0x44, ["aget", "aget-wide", "aget-object", "aget-boolean", "aget-byte", "aget-char", "aget-short",
           "aput", "aput-wide", "aput-object", "aput-boolean", "aput-byte", "aput-char", "aput-short"], "23x");
run(0x52, ["iget", "iget-wide", "iget-object", "iget-boolean", "iget-byte", "iget-char", "iget-short",
           "iput", "iput-wide", "iput-object", "iput-boolean", "iput-byte", "iput-char", "iput-short"], "22c");
run(0x60, ["sget", "sget-wide", "sget-object", "sget-boolean", "sget-byte", "sget-char", "sget-short",
           "sput", "sput-wide", "sput-object", "sput-boolean", "sput-byte", "sput-char", "sput-short"], "21c");
run(0x6e, ["invoke-virtual", "invoke-super", "invoke-direct", "invoke-static", "invoke-interface"], "35c");
op(0x73, "unused-73", "10x");
run(0x74, ["invoke-virtual/range", "invoke-super/range", "invoke-direct/range",
           "invoke-static/range", "invoke-interface/range"], "3rc");
run(0x79, ["unused-79", "unused-7a"], "10x");
run(0x7b, ["neg-int", "not-int", "neg-long", "not-long", "neg-float", "neg-double",
           "int-to-long", "int-to-float", "int-to-double", "long-to-int", "long-to-float",
           "long-to-double", "float-to-int", "float-to-long", "float-to-double",
           "double-to-int", "double-to-long", "double-to-float",
           "int-to-byte", "int-to-char", "int-to-short"], "12x");

const BINOPS = [
  "add-int", "sub-int", "mul-int", "div-int", "rem-int", "and-int", "or-int", "xor-int",
  "shl-int", "shr-int", "ushr-int",
  "add-long", "sub-long", "mul-long", "div-long", "rem-long", "and-long", "or-long", "xor-long",
  "shl-long", "shr-long", "ushr-long",
  "add-float", "sub-float", "mul-float", "div-float", "rem-float",
  "add-double", "sub-double", "mul-double", "div-double", "rem-double",
];
run(0x90, BINOPS, "23x");
run(0xb0, BINOPS.map((n) => `${n}/2addr`), "12x");
run(0xd0, ["add-int/lit16", "rsub-int", "mul-int/lit16", "div-int/lit16",
           "rem-int/lit16", "and-int/lit16", "or-int/lit16", "xor-int/lit16"], "22s");
run(0xd8, ["add-int/lit8", "rsub-int/lit8", "mul-int/lit8", "div-int/lit8", "rem-int/lit8",
           "and-int/lit8", "or-int/lit8", "xor-int/lit8", "shl-int/lit8", "shr-int/lit8",
           "ushr-int/lit8"], "22b");
for (let code = 0xe3; code <= 0xf9; code++) op(code, `unused-${code.toString(16)}`, "10x");
op(0xfa, "invoke-polymorphic", "45cc");
op(0xfb, "invoke-polymorphic/range", "4rcc");
op(0xfc, "invoke-custom", "35c");
op(0xfd, "invoke-custom/range", "3rc");
op(0xfe, "const-method-handle", "21c");
op(0xff, "const-method-type", "21c");

export const OPCODES: readonly OpcodeInfo[] = TABLE;

// payload pseudo-instructions live under nop with a nonzero high byte
export const PACKED_SWITCH_PAYLOAD = 0x0100;
export const SPARSE_SWITCH_PAYLOAD = 0x0200;
export const FILL_ARRAY_PAYLOAD = 0x0300;
