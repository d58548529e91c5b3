/**
 * Code-aware tokenization, matching the retrieval side's default mode:
 * NFC normalize, split on non-alphanumerics, split camelCase and
 * digit/letter boundaries, lowercase. The served handshake advertises this
 * as "code_aware_default" so clients can count patch budgets consistently.
 */

export const TOKENIZER_NAME = "code_aware_default";

const ROUGH = /[^\W_]+/gu;
const PIECES = /[0-9]+|[A-Z]+(?![a-z])|[A-Z][a-z]*|[a-z]+|[^\W\da-zA-Z_]+/gu;

export function tokenize(text: string): string[] {
  const out: string[] = [];
  const normalized = text.normalize("NFC");
  for (const chunk of normalized.match(ROUGH) ?? []) {
    for (const piece of chunk.match(PIECES) ?? []) {
      out.push(piece.toLowerCase());
    }
  }
  return out;
}

/** FNV-1a over UTF-16 code units; stable across runs and platforms. */
export function hashToken(token: string, buckets: number): number {
  let h = 0x811c9dc5;
  for (let i = 0; i < token.length; i++) {
    h ^= token.charCodeAt(i);
    h = Math.imul(h, 0x01000193) >>> 0;
  }
  return h % buckets;
}
