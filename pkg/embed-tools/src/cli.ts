/**
 * embed-tools CLI.
 *
 *   export --docs documents.jsonl --out embeddings.bin [--model hash-64]
 *          [--max-seq-len 256] [--pooling mean_tokens|model_native]
 *          [--id-field doc_id] [--text-field text]
 *   serve  --port 8600 [--behavior fixed_text|echo_prompt_hash|copy_first_profile_tag]
 */

import { DEFAULT_MAX_SEQ_LEN, runExport } from "./exporter";
import { Behavior, createServer } from "./server";

function parseFlags(argv: string[]): Map<string, string> {
  const flags = new Map<string, string>();
  for (let i = 0; i < argv.length; i += 2) {
    const key = argv[i];
    const value = argv[i + 1];
    if (!key.startsWith("--") || value === undefined) {
      throw new Error(`bad arguments near '${key}'`);
    }
    flags.set(key.slice(2), value);
  }
  return flags;
}

function cmdExport(argv: string[]): void {
  const flags = parseFlags(argv);
  const docs = flags.get("docs");
  const out = flags.get("out");
  if (!docs || !out) {
    throw new Error("export requires --docs and --out");
  }
  const pooling = flags.get("pooling") ?? "mean_tokens";
  if (pooling !== "mean_tokens" && pooling !== "model_native") {
    throw new Error(`unknown pooling '${pooling}'`);
  }
  const stats = runExport({
    model: flags.get("model") ?? "hash-64",
    documentsPath: docs,
    outputPath: out,
    maxSeqLen: parseInt(flags.get("max-seq-len") ?? String(DEFAULT_MAX_SEQ_LEN), 10),
    pooling,
    idField: flags.get("id-field") ?? "doc_id",
    textField: flags.get("text-field") ?? "text",
  });
  console.log(
    `wrote ${stats.count} vectors (dim ${stats.dim}) to ${out}` +
      (stats.truncated ? `; ${stats.truncated} truncated` : "")
  );
}

function cmdServe(argv: string[]): void {
  const flags = parseFlags(argv);
  const port = parseInt(flags.get("port") ?? "8600", 10);
  const behavior = (flags.get("behavior") ?? "fixed_text") as Behavior;
  if (!["echo_prompt_hash", "copy_first_profile_tag", "fixed_text"].includes(behavior)) {
    throw new Error(`unknown behavior '${behavior}'`);
  }
  const server = createServer(behavior);
  server.listen(port, "127.0.0.1", () => {
    console.log(`mock generator listening on 127.0.0.1:${port} (${behavior})`);
  });
}

function main(): void {
  const [command, ...rest] = process.argv.slice(2);
  try {
    if (command === "export") {
      cmdExport(rest);
    } else if (command === "serve") {
      cmdServe(rest);
    } else {
      console.error("usage: embed-tools <export|serve> [flags]");
      process.exitCode = 2;
    }
  } catch (err) {
    console.error(`error: ${err instanceof Error ? err.message : err}`);
    process.exitCode = 1;
  }
}

main();
