/**
 * Line protocol: one JSON object per line, ids echoed verbatim.
 *
 *   {"op":"hello"}                        -> {"op":"hello","labels":[...]}
 *   {"op":"predict","id":N,"x":[...]}     -> {"op":"probs","id":N,"p":[...]}
 *   anything invalid                      -> {"op":"error","id":N|null,"msg":"..."}
 *
 * The handler never throws: malformed input becomes an error line so a
 * stray request cannot take the service down mid-run.
 */

import { ModelData, predictProba } from './model.js';
import { Schema } from './schema.js';

export interface Service {
  schema: Schema;
  model: ModelData;
}

function errorLine(id: unknown, msg: string): string {
  return JSON.stringify({ op: 'error', id: id === undefined ? null : id, msg });
}

export function handleLine(service: Service, line: string): string {
  let request: any;
  try {
    request = JSON.parse(line);
  } catch {
    return errorLine(null, 'request is not valid JSON');
  }
  if (typeof request !== 'object' || request === null || typeof request.op !== 'string') {
    return errorLine(request?.id, 'request missing op field');
  }
  switch (request.op) {
    case 'hello':
      return JSON.stringify({ op: 'hello', labels: service.model.labels });
    case 'predict': {
      if (!Array.isArray(request.x)) {
        return errorLine(request.id, 'predict request missing x array');
      }
      try {
        const p = predictProba(service.model, service.schema, request.x);
        return JSON.stringify({ op: 'probs', id: request.id ?? null, p });
      } catch (err) {
        return errorLine(request.id, err instanceof Error ? err.message : String(err));
      }
    }
    default:
      return errorLine(request.id, `unknown op ${JSON.stringify(request.op)}`);
  }
}
