/**
 * Batch export: documents.jsonl in, engine-format embeddings.bin out.
 * One vector per document, ids aligned with input order.
 */

import { readFileSync, writeFileSync } from "node:fs";

import { EmbeddingRecord, writeEmbeddings } from "./binfmt";
import { EncoderSpec, Pooling, encodeText, resolveModel } from "./encoder";

export interface ExportJob {
  model: string;
  documentsPath: string;
  outputPath: string;
  maxSeqLen: number;
  pooling: Pooling;
  idField: string;
  textField: string;
}

export interface ExportStats {
  count: number;
  dim: number;
  truncated: number;
}

export const DEFAULT_MAX_SEQ_LEN = 256;

export function runExport(job: ExportJob, log: (msg: string) => void = console.error): ExportStats {
  const dim = resolveModel(job.model);
  const spec: EncoderSpec = {
    model: job.model,
    dim,
    maxSeqLen: job.maxSeqLen,
    pooling: job.pooling,
  };
  const lines = readFileSync(job.documentsPath, "utf-8").split("\n");
  const records: EmbeddingRecord[] = [];
  const seen = new Set<string>();
  let truncated = 0;
  lines.forEach((line, index) => {
    const trimmed = line.trim();
    if (!trimmed) return;
    let obj: Record<string, unknown>;
    try {
      obj = JSON.parse(trimmed);
    } catch (err) {
      throw new Error(`${job.documentsPath}:${index + 1}: invalid JSON (${err})`);
    }
    const id = obj[job.idField];
    const text = obj[job.textField];
    if (typeof id !== "string" || typeof text !== "string") {
      throw new Error(
        `${job.documentsPath}:${index + 1}: needs string fields '${job.idField}' and '${job.textField}'`
      );
    }
    if (seen.has(id)) {
      throw new Error(`${job.documentsPath}:${index + 1}: duplicate id '${id}'`);
    }
    seen.add(id);
    const encoded = encodeText(text, spec);
    if (encoded.truncated) {
      truncated += 1;
      log(`warning: '${id}' truncated to ${job.maxSeqLen} tokens`);
    }
    records.push({ id, vector: encoded.vector });
  });
  writeFileSync(job.outputPath, writeEmbeddings(records, dim));
  return { count: records.length, dim, truncated };
}
