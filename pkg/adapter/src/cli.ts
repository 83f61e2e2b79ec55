/**
 * CLI: node dist/cli.js --in train_pairs.jsonl --out dataset/ [--split 0.9] [--seed 42]
 */

import { convert, SchemaError } from "./convert.js";

function parseArgs(argv: string[]): Map<string, string> {
  const args = new Map<string, string>();
  for (let i = 0; i < argv.length; i += 2) {
    const flag = argv[i];
    const value = argv[i + 1];
    if (!flag.startsWith("--") || value === undefined) {
      throw new Error(`unexpected argument ${flag}`);
    }
    args.set(flag.slice(2), value);
  }
  return args;
}

function main(): number {
  let args: Map<string, string>;
  try {
    args = parseArgs(process.argv.slice(2));
  } catch (error) {
    console.error(String(error));
    console.error("usage: cli --in <emitter.jsonl> --out <dir> [--split 0.9] [--seed 42]");
    return 1;
  }
  const input = args.get("in");
  const outDir = args.get("out");
  if (!input || !outDir) {
    console.error("usage: cli --in <emitter.jsonl> --out <dir> [--split 0.9] [--seed 42]");
    return 1;
  }
  const splitRatio = args.has("split") ? Number(args.get("split")) : 0.9;
  const seed = args.has("seed") ? Number(args.get("seed")) : 42;
  try {
    const result = convert(input, outDir, splitRatio, seed);
    console.error(
      `converted ${result.manifest.example_count} example(s): ` +
        `${result.manifest.train_count} train / ${result.manifest.val_count} val -> ${outDir}`,
    );
    return 0;
  } catch (error) {
    if (error instanceof SchemaError) {
      console.error(`schema error: ${error.message}`);
      return 1;
    }
    console.error(String(error));
    return 2;
  }
}

process.exit(main());
