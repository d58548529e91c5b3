/** Triplet file loading (the retrieval side's line-delimited format). */

import * as fs from "fs";

export interface TripletRow {
  queryText: string;
  passageText: string;
  label: number;
}

export class EmptyTripletsError extends Error {
  constructor(path: string) {
    super(`no triplets in ${path}`);
    this.name = "EmptyTriplets";
  }
}

export class NonBinaryLabelError extends Error {
  constructor(lineNo: number, label: unknown) {
    super(`line ${lineNo}: label must be 0 or 1, got ${JSON.stringify(label)}`);
    this.name = "NonBinaryLabel";
  }
}

export function loadTriplets(path: string): TripletRow[] {
  const rows: TripletRow[] = [];
  const text = fs.readFileSync(path, "utf-8");
  let lineNo = 0;
  for (const line of text.split("\n")) {
    lineNo += 1;
    if (!line.trim()) continue;
    const payload = JSON.parse(line);
    const label = payload.label;
    if (label !== 0 && label !== 1) {
      throw new NonBinaryLabelError(lineNo, label);
    }
    rows.push({
      queryText: String(payload.query_text ?? ""),
      passageText: String(payload.passage_text ?? ""),
      label,
    });
  }
  if (rows.length === 0) {
    throw new EmptyTripletsError(path);
  }
  return rows;
}
