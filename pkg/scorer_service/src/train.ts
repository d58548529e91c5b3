/**
 * Training: mean squared error between the sigmoid score and the binary
 * label, Adam updates, seeded shuffling. Saves a versioned artifact
 * directory (manifest.json + weights.json) that serve and score_offline load.
 */

import * as fs from "fs";
import * as path from "path";

import { loadTriplets, TripletRow } from "./data";
import { Adam, ModelConfig, PRESETS, ScoreModel } from "./model";
import { mulberry32, shuffleInPlace } from "./rng";
import { TOKENIZER_NAME } from "./tokenizer";

export const ARTIFACT_FORMAT = "scorer-artifact-v1";

export interface TrainConfig {
  tripletsPath: string;
  outDir: string;
  epochs?: number;
  batchSize?: number;
  learningRate?: number;
  maxSequenceTokens?: number;
  modelSize?: "tiny" | "base";
  seed?: number;
}

export interface TrainResult {
  lossCurve: number[];
  model: ScoreModel;
}

export function train(config: TrainConfig): TrainResult {
  const epochs = config.epochs ?? 8;
  const batchSize = config.batchSize ?? 32;
  const learningRate = config.learningRate ?? 5e-5;
  const seed = config.seed ?? 0;
  if (epochs < 0) throw new Error("epochs must be >= 0");
  if (learningRate <= 0) throw new Error("learning rate must be > 0");

  const preset: ModelConfig = { ...PRESETS[config.modelSize ?? "tiny"] };
  if (config.maxSequenceTokens) preset.maxSequenceTokens = config.maxSequenceTokens;

  const rows = loadTriplets(config.tripletsPath);
  const model = new ScoreModel(preset, seed);
  const encoded = rows.map((row) => ({
    ids: model.encode(row.queryText, row.passageText),
    label: row.label,
  }));

  const optimizer = new Adam(learningRate);
  const rng = mulberry32(0xabcd ^ seed);
  const lossCurve: number[] = [];
  const order = encoded.map((_, i) => i);

  for (let epoch = 0; epoch < epochs; epoch++) {
    shuffleInPlace(order, rng);
    let lossSum = 0;
    for (let start = 0; start < order.length; start += batchSize) {
      const batch = order.slice(start, start + batchSize);
      for (const idx of batch) {
        const example = encoded[idx];
        const fwd = model.forward(example.ids);
        const err = fwd.score - example.label;
        lossSum += err * err;
        // d(mean squared error)/d(logit) for this example
        const dLogit = (2 * err * fwd.score * (1 - fwd.score)) / batch.length;
        model.backward(fwd, dLogit);
      }
      optimizer.update(model.params());
    }
    lossCurve.push(lossSum / encoded.length);
  }

  saveArtifact(model, config, lossCurve);
  return { lossCurve, model };
}

export function evaluateMse(model: ScoreModel, rows: TripletRow[]): number {
  let sum = 0;
  for (const row of rows) {
    const err = model.score(row.queryText, row.passageText) - row.label;
    sum += err * err;
  }
  return sum / rows.length;
}

function saveArtifact(model: ScoreModel, config: TrainConfig, lossCurve: number[]): void {
  fs.mkdirSync(config.outDir, { recursive: true });
  const manifest = {
    format: ARTIFACT_FORMAT,
    tokenizer: TOKENIZER_NAME,
    model: model.config,
    modelSize: config.modelSize ?? "tiny",
    seed: config.seed ?? 0,
    epochs: config.epochs ?? 8,
    batchSize: config.batchSize ?? 32,
    learningRate: config.learningRate ?? 5e-5,
    lossCurve,
  };
  fs.writeFileSync(path.join(config.outDir, "manifest.json"), JSON.stringify(manifest, null, 2) + "\n");
  const weights = {
    emb: Array.from(model.emb.data),
    wq: Array.from(model.wq.data),
    wk: Array.from(model.wk.data),
    wv: Array.from(model.wv.data),
    head: Array.from(model.head.data),
    bias: Array.from(model.bias.data),
  };
  fs.writeFileSync(path.join(config.outDir, "weights.json"), JSON.stringify(weights) + "\n");
}

export function loadArtifact(dir: string): ScoreModel {
  const manifest = JSON.parse(fs.readFileSync(path.join(dir, "manifest.json"), "utf-8"));
  if (manifest.format !== ARTIFACT_FORMAT) {
    throw new Error(`${dir}: unsupported artifact format ${manifest.format}`);
  }
  const model = new ScoreModel(manifest.model as ModelConfig, manifest.seed);
  const weights = JSON.parse(fs.readFileSync(path.join(dir, "weights.json"), "utf-8"));
  model.emb.data.set(weights.emb);
  model.wq.data.set(weights.wq);
  model.wk.data.set(weights.wk);
  model.wv.data.set(weights.wv);
  model.head.data.set(weights.head);
  model.bias.data.set(weights.bias);
  return model;
}

function parseArgs(argv: string[]): TrainConfig {
  const args = new Map<string, string>();
  for (let i = 0; i < argv.length; i += 2) {
    if (!argv[i].startsWith("--") || i + 1 >= argv.length) {
      throw new Error(`bad argument ${argv[i]}`);
    }
    args.set(argv[i].slice(2), argv[i + 1]);
  }
  const triplets = args.get("triplets");
  const out = args.get("out");
  if (!triplets || !out) {
    throw new Error("usage: train --triplets FILE --out DIR [--epochs N] [--batch-size N] [--lr F] [--seed N] [--model-size tiny|base] [--max-seq N]");
  }
  return {
    tripletsPath: triplets,
    outDir: out,
    epochs: args.has("epochs") ? Number(args.get("epochs")) : undefined,
    batchSize: args.has("batch-size") ? Number(args.get("batch-size")) : undefined,
    learningRate: args.has("lr") ? Number(args.get("lr")) : undefined,
    seed: args.has("seed") ? Number(args.get("seed")) : undefined,
    modelSize: (args.get("model-size") as "tiny" | "base") ?? undefined,
    maxSequenceTokens: args.has("max-seq") ? Number(args.get("max-seq")) : undefined,
  };
}

if (require.main === module) {
  try {
    const config = parseArgs(process.argv.slice(2));
    const { lossCurve } = train(config);
    console.log(JSON.stringify({ out: config.outDir, lossCurve }));
  } catch (err) {
    console.error(String(err));
    process.exit(1);
  }
}
