/**
 * Line-delimited scoring endpoint over stdin/stdout.
 *
 * On start the server prints one handshake line advertising its name, batch
 * ceiling and tokenizer. Each request line {id, q, p} is answered with
 * {id, s}; malformed requests get an {error} line and the connection stays
 * alive. Scores are deterministic for a fixed artifact.
 */

import * as readline from "readline";

import { ScoreModel } from "./model";
import { TOKENIZER_NAME } from "./tokenizer";
import { loadArtifact } from "./train";

export const MAX_BATCH = 64;

export function handshakeLine(name = "scorer-service"): string {
  return JSON.stringify({ name, max_batch: MAX_BATCH, tokenizer: TOKENIZER_NAME });
}

export function handleRequestLine(model: ScoreModel, line: string): string {
  let payload: unknown;
  try {
    payload = JSON.parse(line);
  } catch {
    return JSON.stringify({ error: "unparseable request line" });
  }
  if (typeof payload !== "object" || payload === null) {
    return JSON.stringify({ error: "request must be a map" });
  }
  const req = payload as { id?: unknown; q?: unknown; p?: unknown };
  if (typeof req.id !== "number" || !Number.isInteger(req.id)) {
    return JSON.stringify({ error: "missing integer id" });
  }
  if (typeof req.q !== "string" || typeof req.p !== "string") {
    return JSON.stringify({ error: "missing q/p strings", id: req.id });
  }
  const score = model.score(req.q, req.p);
  return JSON.stringify({ id: req.id, s: score });
}

export function serve(artifactDir: string): void {
  const model = loadArtifact(artifactDir);
  process.stdout.write(handshakeLine() + "\n");
  const rl = readline.createInterface({ input: process.stdin, terminal: false });
  rl.on("line", (line) => {
    if (!line.trim()) return;
    process.stdout.write(handleRequestLine(model, line) + "\n");
  });
}

if (require.main === module) {
  const artifact = process.argv[2];
  if (!artifact) {
    console.error("usage: serve ARTIFACT_DIR");
    process.exit(1);
  }
  serve(artifact);
}
