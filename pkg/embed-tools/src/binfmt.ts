/**
 * The engine's binary embedding format, byte for byte:
 * magic "CRAGEMB1", little-endian u32 count and dim, then per record a
 * u32 id length, UTF-8 id bytes, and dim little-endian f32 values.
 */

export const MAGIC = Buffer.from("CRAGEMB1", "ascii");

export interface EmbeddingRecord {
  id: string;
  vector: Float32Array;
}

export function writeEmbeddings(records: EmbeddingRecord[], dim: number): Buffer {
  const chunks: Buffer[] = [];
  const header = Buffer.alloc(8);
  header.writeUInt32LE(records.length, 0);
  header.writeUInt32LE(dim, 4);
  chunks.push(MAGIC, header);
  for (const record of records) {
    if (record.vector.length !== dim) {
      throw new Error(`record '${record.id}': vector has dim ${record.vector.length}, expected ${dim}`);
    }
    const idBytes = Buffer.from(record.id, "utf-8");
    const lenBuf = Buffer.alloc(4);
    lenBuf.writeUInt32LE(idBytes.length, 0);
    const vecBuf = Buffer.alloc(4 * dim);
    for (let i = 0; i < dim; i++) vecBuf.writeFloatLE(record.vector[i], i * 4);
    chunks.push(lenBuf, idBytes, vecBuf);
  }
  return Buffer.concat(chunks);
}

export function readEmbeddings(data: Buffer): { dim: number; records: EmbeddingRecord[] } {
  if (data.length < 16 || !data.subarray(0, 8).equals(MAGIC)) {
    throw new Error("not an embeddings file (bad magic)");
  }
  const count = data.readUInt32LE(8);
  const dim = data.readUInt32LE(12);
  let offset = 16;
  const records: EmbeddingRecord[] = [];
  for (let i = 0; i < count; i++) {
    const idLen = data.readUInt32LE(offset);
    offset += 4;
    const id = data.subarray(offset, offset + idLen).toString("utf-8");
    offset += idLen;
    const vector = new Float32Array(dim);
    for (let j = 0; j < dim; j++) {
      vector[j] = data.readFloatLE(offset);
      offset += 4;
    }
    records.push({ id, vector });
  }
  if (offset !== data.length) {
    throw new Error(`${data.length - offset} trailing bytes after last record`);
  }
  return { dim, records };
}
