/**
 * Batch scoring without a live process: pairs file in, scores file out.
 * Pairs are one JSON map per line {id?, q, p}; ids default to the 0-based
 * line position among pair lines.
 */

import * as fs from "fs";

import { loadArtifact } from "./train";

export function scoreOffline(artifactDir: string, pairsPath: string, outPath: string): number {
  const model = loadArtifact(artifactDir);
  const lines = fs.readFileSync(pairsPath, "utf-8").split("\n");
  const out: string[] = [];
  let index = 0;
  for (const line of lines) {
    if (!line.trim()) continue;
    const payload = JSON.parse(line) as { id?: number; q: string; p: string };
    const id = payload.id ?? index;
    index += 1;
    out.push(JSON.stringify({ id, s: model.score(payload.q, payload.p) }));
  }
  fs.writeFileSync(outPath, out.join("\n") + (out.length ? "\n" : ""));
  return out.length;
}

if (require.main === module) {
  const [artifact, pairs, outPath] = process.argv.slice(2);
  if (!artifact || !pairs || !outPath) {
    console.error("usage: score_offline ARTIFACT_DIR PAIRS_FILE OUT_FILE");
    process.exit(1);
  }
  const count = scoreOffline(artifact, pairs, outPath);
  console.log(JSON.stringify({ scored: count, out: outPath }));
}
