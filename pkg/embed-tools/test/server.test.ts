import { AddressInfo } from "node:net";

import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { createServer, firstTagFromPrompt, respond, sha256Hex } from "../src/server";

describe("tag extraction rule", () => {
  it("matches the engine's first-is-span rule", () => {
    const prompt =
      "Given the user previous movie tag pairs: The tag for the movie description: " +
      "a grim payback tale is violence, the tag for the movie description: " +
      "jokes all night is comedy, which tag does the movie description: x relate to?";
    expect(firstTagFromPrompt(prompt)).toBe("violence");
  });

  it("returns empty when nothing matches", () => {
    expect(firstTagFromPrompt("no spans here")).toBe("");
  });

  it("stops at question marks", () => {
    expect(firstTagFromPrompt("this is fine? trailing")).toBe("fine");
  });
});

describe("behaviors", () => {
  it("echo_prompt_hash is sha256", () => {
    expect(respond("echo_prompt_hash", "abc")).toBe(sha256Hex("abc"));
    expect(respond("echo_prompt_hash", "abc")).toHaveLength(64);
  });

  it("fixed_text returns OK", () => {
    expect(respond("fixed_text", "whatever")).toBe("OK");
  });
});

describe("mock server wire contract", () => {
  const server = createServer("fixed_text");
  let url = "";

  beforeAll(async () => {
    await new Promise<void>((resolve) => server.listen(0, "127.0.0.1", resolve));
    const addr = server.address() as AddressInfo;
    url = `http://127.0.0.1:${addr.port}/`;
  });

  afterAll(() => server.close());

  it("honors the request/response schema", async () => {
    const res = await fetch(url, {
      method: "POST",
      body: JSON.stringify({ prompt: "x", max_output_tokens: 8, beam_size: 4 }),
    });
    expect(res.status).toBe(200);
    expect(await res.json()).toEqual({ text: "OK" });
  });

  it("rejects malformed JSON with 400", async () => {
    const res = await fetch(url, { method: "POST", body: "{nope" });
    expect(res.status).toBe(400);
    const body = await res.json();
    expect(body.error).toMatch(/JSON/);
  });

  it("rejects a missing prompt with 400", async () => {
    const res = await fetch(url, { method: "POST", body: JSON.stringify({ beam_size: 4 }) });
    expect(res.status).toBe(400);
  });

  it("rejects GET with 400", async () => {
    const res = await fetch(url);
    expect(res.status).toBe(400);
  });

  it("answers concurrent requests independently", async () => {
    const tagServer = createServer("copy_first_profile_tag");
    await new Promise<void>((resolve) => tagServer.listen(0, "127.0.0.1", resolve));
    const addr = tagServer.address() as AddressInfo;
    const tagUrl = `http://127.0.0.1:${addr.port}/`;
    const prompts = ["a is alpha, b", "c is beta, d", "e is gamma, f"];
    const responses = await Promise.all(
      prompts.map((p) =>
        fetch(tagUrl, { method: "POST", body: JSON.stringify({ prompt: p }) }).then((r) =>
          r.json()
        )
      )
    );
    expect(responses.map((r) => r.text)).toEqual(["alpha", "beta", "gamma"]);
    tagServer.close();
  });
});
