/**
 * Mock generation endpoint honoring the engine's wire contract:
 * request {"prompt", "max_output_tokens", "beam_size"} -> {"text"}.
 *
 * Behaviors are pure functions of the request body, so responses run
 * concurrently without shared state. "copy_first_profile_tag" extracts
 * the first "is <tag>" span (up to the next comma or question mark) and
 * must stay in lockstep with the engine's offline responder.
 */

import { createHash } from "node:crypto";
import { IncomingMessage, Server, ServerResponse, createServer as createHttpServer } from "node:http";

export type Behavior = "echo_prompt_hash" | "copy_first_profile_tag" | "fixed_text";

export const FIRST_TAG_RE = /\bis ([^,?]+)/;

export function firstTagFromPrompt(prompt: string): string {
  const match = FIRST_TAG_RE.exec(prompt);
  return match ? match[1].trim() : "";
}

export function sha256Hex(text: string): string {
  return createHash("sha256").update(text, "utf-8").digest("hex");
}

export function respond(behavior: Behavior, prompt: string): string {
  switch (behavior) {
    case "echo_prompt_hash":
      return sha256Hex(prompt);
    case "copy_first_profile_tag":
      return firstTagFromPrompt(prompt);
    case "fixed_text":
      return "OK";
  }
}

function fail(res: ServerResponse, status: number, message: string): void {
  res.writeHead(status, { "content-type": "application/json" });
  res.end(JSON.stringify({ error: message }));
}

export function createServer(behavior: Behavior): Server {
  return createHttpServer((req: IncomingMessage, res: ServerResponse) => {
    if (req.method !== "POST") {
      fail(res, 400, "expected POST");
      return;
    }
    const chunks: Buffer[] = [];
    req.on("data", (chunk) => chunks.push(chunk));
    req.on("end", () => {
      let body: Record<string, unknown>;
      try {
        body = JSON.parse(Buffer.concat(chunks).toString("utf-8"));
      } catch {
        fail(res, 400, "body is not valid JSON");
        return;
      }
      if (typeof body !== "object" || body === null || typeof body.prompt !== "string") {
        fail(res, 400, "missing string field 'prompt'");
        return;
      }
      if (
        (body.max_output_tokens !== undefined && typeof body.max_output_tokens !== "number") ||
        (body.beam_size !== undefined && typeof body.beam_size !== "number")
      ) {
        fail(res, 400, "'max_output_tokens' and 'beam_size' must be numbers");
        return;
      }
      res.writeHead(200, { "content-type": "application/json" });
      res.end(JSON.stringify({ text: respond(behavior, body.prompt) }));
    });
  });
}
