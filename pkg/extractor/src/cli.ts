/** Command line: extract --apk <path> --out <dir> --families <csv> [--family <name>]
 *
 * Writes one graph document per extracted graph plus an extraction
 * record, all in the pipeline's JSON wire format. Exit codes: 0 success,
 * 1 extraction failure, 2 usage error.
 */

import { mkdirSync, readFileSync, writeFileSync } from "node:fs";
import { join } from "node:path";
import { ExtractionError, extractApk, EXTRACTOR_VERSION } from "./extract.js";
import { serializeGraphDoc, validateGraphDoc } from "./graphdoc.js";

interface CliArgs {
  apk: string;
  out: string;
  families: string[];
  family?: string;
}

function parseArgs(argv: string[]): CliArgs {
  if (argv[0] !== "extract") {
    throw new UsageError(`unknown command ${argv[0] ?? "<none>"}; expected 'extract'`);
  }
  const args: Partial<CliArgs> = { families: [] };
  for (let i = 1; i < argv.length; i += 2) {
    const flag = argv[i];
    const value = argv[i + 1];
    if (value === undefined) throw new UsageError(`missing value for ${flag}`);
    switch (flag) {
      case "--apk": args.apk = value; break;
      case "--out": args.out = value; break;
      case "--families": args.families = value.split(",").map((f) => f.trim()).filter(Boolean); break;
      case "--family": args.family = value; break;
      default: throw new UsageError(`unknown flag ${flag}`);
    }
  }
  if (!args.apk) throw new UsageError("--apk is required");
  if (!args.out) throw new UsageError("--out is required");
  return args as CliArgs;
}

class UsageError extends Error {}

export function main(argv: string[]): number {
  let args: CliArgs;
  try {
    args = parseArgs(argv);
  } catch (err) {
    console.error(`usage error: ${(err as Error).message}`);
    console.error("usage: graphshield-extract extract --apk <path> --out <dir> --families <csv> [--family <name>]");
    return 2;
  }

  let apkBytes: Uint8Array;
  try {
    apkBytes = readFileSync(args.apk);
  } catch (err) {
    console.error(`cannot read APK: ${(err as Error).message}`);
    return 2;
  }

  try {
    const result = extractApk(apkBytes, args.apk, { families: args.families, family: args.family });
    mkdirSync(args.out, { recursive: true });

    const emitted: { bytecode: string | null; native: string[] } = { bytecode: null, native: [] };
    const emit = (fileName: string, doc: import("./graphdoc.js").GraphDoc) => {
      const problems = validateGraphDoc(doc);
      if (problems.length > 0) {
        throw new ExtractionError(`emitted document would be invalid: ${problems.join("; ")}`);
      }
      writeFileSync(join(args.out, fileName), serializeGraphDoc(doc));
      return fileName;
    };

    if (result.bytecodeDoc) {
      emitted.bytecode = emit(`${result.appId}-bytecode.json`, result.bytecodeDoc);
    }
    for (const { entryName, doc } of result.nativeDocs) {
      const sanitized = entryName.replace(/[^A-Za-z0-9._-]+/g, "_");
      emitted.native.push(emit(`${result.appId}-native-${sanitized}.json`, doc));
    }

    const record = {
      app_id: result.appId,
      apk_path: args.apk,
      bytecode_doc: emitted.bytecode,
      native_docs: emitted.native,
      extractor_versions: { extractor: EXTRACTOR_VERSION, dex: "035", arch: "arm32" },
      skips: result.skips,
    };
    writeFileSync(join(args.out, `${result.appId}-record.json`),
                  JSON.stringify(record, null, 1) + "\n");
    console.log(JSON.stringify({
      status: "ok",
      app_id: result.appId,
      bytecode: emitted.bytecode,
      native: emitted.native,
      skips: result.skips.length,
    }));
    return 0;
  } catch (err) {
    if (err instanceof ExtractionError) {
      console.error(`extraction failed: ${err.message}`);
      return 1;
    }
    throw err;
  }
}

