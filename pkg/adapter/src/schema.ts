/**
 * Schema config parsing and the tabular feature encoding.
 *
 * The encoding must match the engine's model files bit-for-bit in layout:
 * one-hot block per categorical feature followed by one min-max scaled
 * slot per numeric feature, in schema order.
 */

import { readFileSync } from 'fs';

export interface CategoricalFeature {
  name: string;
  kind: 'categorical';
  domain: string[];
}

export interface NumericFeature {
  name: string;
  kind: 'numeric';
  min: number;
  max: number;
  step: number;
}

export interface TokenFeature {
  name: string;
  kind: 'token';
}

export type Feature = CategoricalFeature | NumericFeature | TokenFeature;

export interface Schema {
  features: Feature[];
  labels: string[];
  protected: string[];
}

export function loadSchema(path: string): Schema {
  const raw = JSON.parse(readFileSync(path, 'utf-8'));
  const features: Feature[] = raw.features.map((entry: any) => {
    if (entry.kind === 'categorical') {
      return { name: entry.name, kind: 'categorical', domain: entry.domain };
    }
    if (entry.kind === 'numeric') {
      return {
        name: entry.name,
        kind: 'numeric',
        min: entry.min,
        max: entry.max,
        step: entry.step ?? 1,
      };
    }
    if (entry.kind === 'token') {
      return { name: entry.name, kind: 'token' };
    }
    throw new Error(`unknown feature kind ${entry.kind}`);
  });
  return { features, labels: raw.labels, protected: raw.protected ?? [] };
}

export function isTextSchema(schema: Schema): boolean {
  return schema.features.some((f) => f.kind === 'token');
}

/** Wire x values -> encoded vector. Throws with a descriptive message on bad input. */
export function encode(schema: Schema, x: (string | number)[]): number[] {
  if (x.length !== schema.features.length) {
    throw new Error(`expected ${schema.features.length} features, got ${x.length}`);
  }
  const out: number[] = [];
  schema.features.forEach((feature, i) => {
    const value = x[i];
    if (feature.kind === 'categorical') {
      const index = feature.domain.indexOf(String(value));
      if (index < 0) {
        throw new Error(`feature ${feature.name}: unknown category ${JSON.stringify(value)}`);
      }
      for (let j = 0; j < feature.domain.length; j++) {
        out.push(j === index ? 1.0 : 0.0);
      }
    } else if (feature.kind === 'numeric') {
      const parsed = typeof value === 'number' ? value : Number(value);
      if (!Number.isFinite(parsed)) {
        throw new Error(`feature ${feature.name}: non-numeric value ${JSON.stringify(value)}`);
      }
      const span = feature.max - feature.min;
      out.push(span === 0 ? 0.0 : (parsed - feature.min) / span);
    } else {
      throw new Error(`feature ${feature.name}: token features have no fixed encoding`);
    }
  });
  return out;
}

/** Wire x for a text schema is the token array itself. */
export function tokens(x: (string | number)[]): string[] {
  return x.map((t) => String(t));
}
