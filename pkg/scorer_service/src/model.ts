/**
 * A tiny attention-based cross encoder trained from scratch.
 *
 * The query and passage are tokenized, hashed into embedding buckets and
 * concatenated around a [SEP] row. One single-head self-attention block with
 * a residual connection encodes the sequence; the mean-pooled representation
 * goes through a linear head and a sigmoid, so every score lands in (0, 1).
 *
 * Forward and backward passes are written out by hand; a finite-difference
 * test pins the gradients.
 */

import { gaussian, mulberry32 } from "./rng";
import { hashToken, tokenize } from "./tokenizer";

export interface ModelConfig {
  dim: number;
  vocabBuckets: number;
  maxSequenceTokens: number;
}

export const PRESETS: Record<string, ModelConfig> = {
  tiny: { dim: 16, vocabBuckets: 1024, maxSequenceTokens: 512 },
  base: { dim: 48, vocabBuckets: 8192, maxSequenceTokens: 512 },
};

export interface Param {
  data: Float64Array;
  grad: Float64Array;
  m: Float64Array;
  v: Float64Array;
}

function makeParam(size: number): Param {
  return {
    data: new Float64Array(size),
    grad: new Float64Array(size),
    m: new Float64Array(size),
    v: new Float64Array(size),
  };
}

export class ScoreModel {
  readonly config: ModelConfig;
  readonly emb: Param; // (vocabBuckets + 1) x dim; last row is [SEP]
  readonly wq: Param; // dim x dim
  readonly wk: Param;
  readonly wv: Param;
  readonly head: Param; // dim
  readonly bias: Param; // 1

  constructor(config: ModelConfig, seed = 0) {
    this.config = config;
    const d = config.dim;
    this.emb = makeParam((config.vocabBuckets + 1) * d);
    this.wq = makeParam(d * d);
    this.wk = makeParam(d * d);
    this.wv = makeParam(d * d);
    this.head = makeParam(d);
    this.bias = makeParam(1);
    const rng = mulberry32(0x5eed ^ seed);
    const scale = 1 / Math.sqrt(d);
    for (let i = 0; i < this.emb.data.length; i++) this.emb.data[i] = gaussian(rng) * 0.1;
    for (const w of [this.wq, this.wk, this.wv]) {
      for (let i = 0; i < w.data.length; i++) w.data[i] = gaussian(rng) * scale;
    }
    for (let i = 0; i < d; i++) this.head.data[i] = gaussian(rng) * 0.1;
  }

  params(): Param[] {
    return [this.emb, this.wq, this.wk, this.wv, this.head, this.bias];
  }

  get sepId(): number {
    return this.config.vocabBuckets;
  }

  encode(query: string, passage: string): Int32Array {
    const q = tokenize(query).map((t) => hashToken(t, this.config.vocabBuckets));
    const p = tokenize(passage).map((t) => hashToken(t, this.config.vocabBuckets));
    const ids = [...q, this.sepId, ...p].slice(0, this.config.maxSequenceTokens);
    return Int32Array.from(ids);
  }

  forward(ids: Int32Array): Forward {
    const d = this.config.dim;
    const L = ids.length;
    const E = this.emb.data;
    const x = new Float64Array(L * d);
    for (let i = 0; i < L; i++) {
      x.set(E.subarray(ids[i] * d, ids[i] * d + d), i * d);
    }
    const q = matmul(x, this.wq.data, L, d);
    const k = matmul(x, this.wk.data, L, d);
    const v = matmul(x, this.wv.data, L, d);
    const invSqrt = 1 / Math.sqrt(d);
    const attn = new Float64Array(L * L);
    for (let i = 0; i < L; i++) {
      let max = -Infinity;
      for (let j = 0; j < L; j++) {
        let dot = 0;
        for (let c = 0; c < d; c++) dot += q[i * d + c] * k[j * d + c];
        const s = dot * invSqrt;
        attn[i * L + j] = s;
        if (s > max) max = s;
      }
      let sum = 0;
      for (let j = 0; j < L; j++) {
        const e = Math.exp(attn[i * L + j] - max);
        attn[i * L + j] = e;
        sum += e;
      }
      for (let j = 0; j < L; j++) attn[i * L + j] /= sum;
    }
    const h = new Float64Array(L * d);
    for (let i = 0; i < L; i++) {
      for (let j = 0; j < L; j++) {
        const a = attn[i * L + j];
        for (let c = 0; c < d; c++) h[i * d + c] += a * v[j * d + c];
      }
      for (let c = 0; c < d; c++) h[i * d + c] += x[i * d + c];
    }
    const pooled = new Float64Array(d);
    if (L > 0) {
      for (let i = 0; i < L; i++) {
        for (let c = 0; c < d; c++) pooled[c] += h[i * d + c];
      }
      for (let c = 0; c < d; c++) pooled[c] /= L;
    }
    let logit = this.bias.data[0];
    for (let c = 0; c < d; c++) logit += this.head.data[c] * pooled[c];
    const score = 1 / (1 + Math.exp(-logit));
    return { ids, x, q, k, v, attn, pooled, score };
  }

  score(query: string, passage: string): number {
    return this.forward(this.encode(query, passage)).score;
  }

  /** Accumulate gradients for d(loss)/d(logit) into the param .grad buffers. */
  backward(fwd: Forward, dLogit: number): void {
    const d = this.config.dim;
    const L = fwd.ids.length;
    this.bias.grad[0] += dLogit;
    if (L === 0) return;
    const dPooled = new Float64Array(d);
    for (let c = 0; c < d; c++) {
      this.head.grad[c] += fwd.pooled[c] * dLogit;
      dPooled[c] = this.head.data[c] * dLogit;
    }
    const dH = new Float64Array(L * d);
    for (let i = 0; i < L; i++) {
      for (let c = 0; c < d; c++) dH[i * d + c] = dPooled[c] / L;
    }
    const dX = new Float64Array(L * d);
    dX.set(dH); // residual
    // h = attn @ v
    const dAttn = new Float64Array(L * L);
    const dV = new Float64Array(L * d);
    for (let i = 0; i < L; i++) {
      for (let j = 0; j < L; j++) {
        let dot = 0;
        for (let c = 0; c < d; c++) dot += dH[i * d + c] * fwd.v[j * d + c];
        dAttn[i * L + j] = dot;
        const a = fwd.attn[i * L + j];
        for (let c = 0; c < d; c++) dV[j * d + c] += a * dH[i * d + c];
      }
    }
    // softmax rows
    const dScores = new Float64Array(L * L);
    for (let i = 0; i < L; i++) {
      let rowDot = 0;
      for (let j = 0; j < L; j++) rowDot += dAttn[i * L + j] * fwd.attn[i * L + j];
      for (let j = 0; j < L; j++) {
        dScores[i * L + j] = fwd.attn[i * L + j] * (dAttn[i * L + j] - rowDot);
      }
    }
    const invSqrt = 1 / Math.sqrt(d);
    const dQ = new Float64Array(L * d);
    const dK = new Float64Array(L * d);
    for (let i = 0; i < L; i++) {
      for (let j = 0; j < L; j++) {
        const g = dScores[i * L + j] * invSqrt;
        for (let c = 0; c < d; c++) {
          dQ[i * d + c] += g * fwd.k[j * d + c];
          dK[j * d + c] += g * fwd.q[i * d + c];
        }
      }
    }
    // projections q = x @ wq etc.
    accumulateMatmulGrads(fwd.x, this.wq, dQ, dX, L, d);
    accumulateMatmulGrads(fwd.x, this.wk, dK, dX, L, d);
    accumulateMatmulGrads(fwd.x, this.wv, dV, dX, L, d);
    // embeddings
    for (let i = 0; i < L; i++) {
      const row = fwd.ids[i] * d;
      for (let c = 0; c < d; c++) this.emb.grad[row + c] += dX[i * d + c];
    }
  }
}

export interface Forward {
  ids: Int32Array;
  x: Float64Array;
  q: Float64Array;
  k: Float64Array;
  v: Float64Array;
  attn: Float64Array;
  pooled: Float64Array;
  score: number;
}

function matmul(x: Float64Array, w: Float64Array, rows: number, d: number): Float64Array {
  const out = new Float64Array(rows * d);
  for (let i = 0; i < rows; i++) {
    for (let c = 0; c < d; c++) {
      const xv = x[i * d + c];
      if (xv === 0) continue;
      for (let j = 0; j < d; j++) out[i * d + j] += xv * w[c * d + j];
    }
  }
  return out;
}

function accumulateMatmulGrads(
  x: Float64Array,
  w: Param,
  dOut: Float64Array,
  dX: Float64Array,
  rows: number,
  d: number,
): void {
  for (let i = 0; i < rows; i++) {
    for (let c = 0; c < d; c++) {
      const xv = x[i * d + c];
      let acc = 0;
      for (let j = 0; j < d; j++) {
        w.grad[c * d + j] += xv * dOut[i * d + j];
        acc += dOut[i * d + j] * w.data[c * d + j];
      }
      dX[i * d + c] += acc;
    }
  }
}

export interface AdamConfig {
  learningRate: number;
  beta1?: number;
  beta2?: number;
  eps?: number;
}

export class Adam {
  private step = 0;
  private readonly beta1: number;
  private readonly beta2: number;
  private readonly eps: number;

  constructor(private readonly lr: number, opts: Partial<AdamConfig> = {}) {
    this.beta1 = opts.beta1 ?? 0.9;
    this.beta2 = opts.beta2 ?? 0.999;
    this.eps = opts.eps ?? 1e-8;
  }

  update(params: Param[]): void {
    this.step += 1;
    const bc1 = 1 - Math.pow(this.beta1, this.step);
    const bc2 = 1 - Math.pow(this.beta2, this.step);
    for (const p of params) {
      for (let i = 0; i < p.data.length; i++) {
        const g = p.grad[i];
        if (g === 0 && p.m[i] === 0 && p.v[i] === 0) continue;
        p.m[i] = this.beta1 * p.m[i] + (1 - this.beta1) * g;
        p.v[i] = this.beta2 * p.v[i] + (1 - this.beta2) * g * g;
        p.data[i] -= (this.lr * (p.m[i] / bc1)) / (Math.sqrt(p.v[i] / bc2) + this.eps);
      }
      p.grad.fill(0);
    }
  }
}
