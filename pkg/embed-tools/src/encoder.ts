/**
 * Deterministic text encoders producing fixed-dimension unit vectors.
 *
 * The "hash-<dim>" model family derives per-token vectors from SHA-256,
 * so identical text always encodes to identical bytes and similar token
 * bags land near each other under cosine. No network, no weights.
 */

import { createHash } from "node:crypto";

export type Pooling = "mean_tokens" | "model_native";

export interface EncoderSpec {
  model: string;
  dim: number;
  maxSeqLen: number;
  pooling: Pooling;
}

const MODEL_RE = /^hash-(\d+)$/;

export function resolveModel(model: string): number {
  const match = MODEL_RE.exec(model);
  if (!match) {
    throw new Error(
      `cannot load model '${model}': known models match hash-<dim>, e.g. hash-64`
    );
  }
  const dim = parseInt(match[1], 10);
  if (!(dim >= 4 && dim <= 4096)) {
    throw new Error(`model '${model}': dim must lie in 4..4096`);
  }
  return dim;
}

export function tokenize(text: string): string[] {
  return text.toLowerCase().split(/\s+/).filter((t) => t.length > 0);
}

/** Expand a seed string into `dim` floats in [-1, 1) via chained SHA-256. */
function hashVector(seed: string, dim: number): Float64Array {
  const out = new Float64Array(dim);
  let filled = 0;
  let round = 0;
  while (filled < dim) {
    const digest = createHash("sha256").update(`${seed}#${round}`).digest();
    for (let off = 0; off + 4 <= digest.length && filled < dim; off += 4) {
      out[filled] = digest.readUInt32LE(off) / 2 ** 31 - 1.0;
      filled += 1;
    }
    round += 1;
  }
  return out;
}

function normalize(vec: Float64Array): Float32Array {
  let norm = 0;
  for (const v of vec) norm += v * v;
  norm = Math.sqrt(norm);
  const out = new Float32Array(vec.length);
  if (norm === 0) return out;
  for (let i = 0; i < vec.length; i++) out[i] = vec[i] / norm;
  return out;
}

export interface EncodeResult {
  vector: Float32Array;
  truncated: boolean;
}

export function encodeText(text: string, spec: EncoderSpec): EncodeResult {
  const tokens = tokenize(text);
  const truncated = tokens.length > spec.maxSeqLen;
  const kept = truncated ? tokens.slice(0, spec.maxSeqLen) : tokens;

  if (spec.pooling === "model_native") {
    return { vector: normalize(hashVector(kept.join(" "), spec.dim)), truncated };
  }
  const acc = new Float64Array(spec.dim);
  if (kept.length === 0) {
    return { vector: new Float32Array(spec.dim), truncated };
  }
  for (const token of kept) {
    const tv = hashVector(token, spec.dim);
    for (let i = 0; i < spec.dim; i++) acc[i] += tv[i];
  }
  for (let i = 0; i < spec.dim; i++) acc[i] /= kept.length;
  return { vector: normalize(acc), truncated };
}
