/**
 * Convert emitted rationale training pairs into an instruction-tuning dataset.
 *
 * Input: JSON-lines with {context, target, origin, source_id} records, as
 * written by the pipeline's emit stage. Output: train/val JSON-lines with
 * {input, output} records, plus a manifest recording counts, the split, and
 * a checksum of the input so re-runs are verifiable. Training itself stays
 * external; hyperparameters are deliberately not this tool's business.
 */

import { createHash } from "crypto";
import * as fs from "fs";
import * as path from "path";

export interface InstructionRecord {
  input: string;
  output: string;
}

export interface AdapterManifest {
  input_path: string;
  input_checksum_sha256: string;
  example_count: number;
  split_ratio: number;
  seed: number;
  train_count: number;
  val_count: number;
  output_format: "instruction-jsonl";
}

export class SchemaError extends Error {
  constructor(
    message: string,
    readonly line: number,
  ) {
    super(`line ${line}: ${message}`);
    this.name = "SchemaError";
  }
}

/** Parse emitter JSON-lines; blank lines are skipped, bad lines are named. */
export function parseEmitterJsonl(content: string): InstructionRecord[] {
  const records: InstructionRecord[] = [];
  const lines = content.split("\n");
  for (let i = 0; i < lines.length; i++) {
    const lineNumber = i + 1;
    const line = lines[i];
    if (line.trim() === "") {
      continue;
    }
    let parsed: unknown;
    try {
      parsed = JSON.parse(line);
    } catch {
      throw new SchemaError("not valid JSON", lineNumber);
    }
    if (typeof parsed !== "object" || parsed === null || Array.isArray(parsed)) {
      throw new SchemaError("expected a JSON object", lineNumber);
    }
    const record = parsed as Record<string, unknown>;
    if (typeof record.context !== "string") {
      throw new SchemaError("missing string field 'context'", lineNumber);
    }
    if (typeof record.target !== "string") {
      throw new SchemaError("missing string field 'target'", lineNumber);
    }
    records.push({ input: record.context, output: record.target });
  }
  return records;
}

/** Small deterministic PRNG so split membership is stable per seed. */
export function mulberry32(seed: number): () => number {
  let state = seed >>> 0;
  return () => {
    state = (state + 0x6d2b79f5) >>> 0;
    let t = state;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

export interface Split<T> {
  train: T[];
  val: T[];
}

/**
 * Seeded split keeping floor(n * ratio) records for training. Records stay
 * in input order inside each split; only membership is randomized.
 */
export function splitRecords<T>(records: T[], splitRatio: number, seed: number): Split<T> {
  if (!(splitRatio >= 0 && splitRatio <= 1)) {
    throw new Error(`split ratio must be in [0, 1], got ${splitRatio}`);
  }
  const indices = records.map((_, i) => i);
  const random = mulberry32(seed);
  for (let i = indices.length - 1; i > 0; i--) {
    const j = Math.floor(random() * (i + 1));
    [indices[i], indices[j]] = [indices[j], indices[i]];
  }
  const trainCount = Math.floor(records.length * splitRatio);
  const trainIndices = new Set(indices.slice(0, trainCount));
  const train: T[] = [];
  const val: T[] = [];
  records.forEach((record, i) => {
    (trainIndices.has(i) ? train : val).push(record);
  });
  return { train, val };
}

export function sha256(buffer: Buffer): string {
  return createHash("sha256").update(buffer).digest("hex");
}

function writeJsonl(filePath: string, records: InstructionRecord[]): void {
  const body = records.map((r) => JSON.stringify(r)).join("\n");
  fs.writeFileSync(filePath, body.length > 0 ? body + "\n" : "");
}

export interface ConvertResult {
  manifest: AdapterManifest;
  trainPath: string;
  valPath: string;
  manifestPath: string;
}

export function convert(
  inputPath: string,
  outDir: string,
  splitRatio = 0.9,
  seed = 42,
): ConvertResult {
  const raw = fs.readFileSync(inputPath);
  const records = parseEmitterJsonl(raw.toString("utf-8"));
  const { train, val } = splitRecords(records, splitRatio, seed);
  fs.mkdirSync(outDir, { recursive: true });
  const trainPath = path.join(outDir, "train.jsonl");
  const valPath = path.join(outDir, "val.jsonl");
  const manifestPath = path.join(outDir, "manifest.json");
  writeJsonl(trainPath, train);
  writeJsonl(valPath, val);
  const manifest: AdapterManifest = {
    input_path: inputPath,
    input_checksum_sha256: sha256(raw),
    example_count: records.length,
    split_ratio: splitRatio,
    seed,
    train_count: train.length,
    val_count: val.length,
    output_format: "instruction-jsonl",
  };
  fs.writeFileSync(manifestPath, JSON.stringify(manifest, null, 2) + "\n");
  return { manifest, trainPath, valPath, manifestPath };
}
