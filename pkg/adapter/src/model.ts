/**
 * Model file loading and forward passes for every kind the trainer writes:
 * multinomial logistic, ReLU MLP, bag-of-words logistic, and the synthetic
 * rule-based diagnostic model.
 */

import { readFileSync } from 'fs';
import { Schema, encode, isTextSchema, tokens } from './schema.js';

export interface LogisticData {
  kind: 'logistic';
  labels: string[];
  weights: number[][]; // [dim][classes]
  bias: number[];
}

export interface MlpLayer {
  weights: number[][];
  bias: number[];
}

export interface MlpData {
  kind: 'mlp';
  labels: string[];
  layers: MlpLayer[];
}

export interface BowData {
  kind: 'bow';
  labels: string[];
  vocab: string[];
  weights: number[][];
  bias: number[];
}

export interface PlantedData {
  kind: 'planted';
  labels: string[];
  base_features: string[];
  base_scale: number;
  base_offset: number;
  region: Record<string, number[]>;
  protected_feature: string;
  flip_values: number[];
  gain: number;
}

export type ModelData = LogisticData | MlpData | BowData | PlantedData;

export function loadModel(path: string): ModelData {
  const raw = JSON.parse(readFileSync(path, 'utf-8'));
  if (!['logistic', 'mlp', 'bow', 'planted'].includes(raw.kind)) {
    throw new Error(`unknown model kind ${raw.kind}`);
  }
  return raw as ModelData;
}

export function softmax(z: number[]): number[] {
  const peak = Math.max(...z);
  const exps = z.map((v) => Math.exp(v - peak));
  const total = exps.reduce((acc, v) => acc + v, 0);
  return exps.map((v) => v / total);
}

function affine(x: number[], weights: number[][], bias: number[]): number[] {
  const out = bias.slice();
  for (let i = 0; i < x.length; i++) {
    const xi = x[i];
    if (xi === 0) continue;
    const row = weights[i];
    for (let c = 0; c < out.length; c++) {
      out[c] += xi * row[c];
    }
  }
  return out;
}

function bowVector(vocab: string[], words: string[]): number[] {
  const index = new Map(vocab.map((w, i) => [w, i]));
  const x = new Array(vocab.length).fill(0);
  for (const word of words) {
    const i = index.get(word);
    if (i !== undefined) x[i] += 1;
  }
  return x;
}

function plantedLogit(model: PlantedData, schema: Schema, x: (string | number)[]): number {
  const byName = new Map(schema.features.map((f, i) => [f.name, i]));
  const valueAt = (name: string): number => {
    const i = byName.get(name);
    if (i === undefined) throw new Error(`model references unknown feature ${name}`);
    const feature = schema.features[i];
    if (feature.kind === 'categorical') {
      const idx = feature.domain.indexOf(String(x[i]));
      if (idx < 0) throw new Error(`feature ${name}: unknown category ${JSON.stringify(x[i])}`);
      return idx;
    }
    return typeof x[i] === 'number' ? (x[i] as number) : Number(x[i]);
  };
  let z = model.base_offset;
  for (const name of model.base_features) {
    z += valueAt(name);
  }
  z *= model.base_scale;
  const inRegion = Object.entries(model.region).every(([name, allowed]) =>
    allowed.includes(valueAt(name)),
  );
  if (inRegion) {
    z += model.flip_values.includes(valueAt(model.protected_feature)) ? model.gain : -model.gain;
  }
  return z;
}

/** Probability vector for one request's x payload. */
export function predictProba(
  model: ModelData,
  schema: Schema,
  x: (string | number)[],
): number[] {
  switch (model.kind) {
    case 'logistic':
      return softmax(affine(encode(schema, x), model.weights, model.bias));
    case 'mlp': {
      let h = encode(schema, x);
      for (let li = 0; li < model.layers.length; li++) {
        const { weights, bias } = model.layers[li];
        h = affine(h, weights, bias);
        if (li < model.layers.length - 1) {
          h = h.map((v) => Math.max(v, 0));
        }
      }
      return softmax(h);
    }
    case 'bow': {
      if (!isTextSchema(schema)) {
        throw new Error('bag-of-words models require a token schema');
      }
      return softmax(affine(bowVector(model.vocab, tokens(x)), model.weights, model.bias));
    }
    case 'planted': {
      const z = plantedLogit(model, schema, x);
      const p1 = 1 / (1 + Math.exp(-z));
      return [1 - p1, p1];
    }
  }
}
