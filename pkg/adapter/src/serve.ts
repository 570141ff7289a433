#!/usr/bin/env node
/**
 * Serve a trained model file over the line protocol.
 *
 *   fairga-adapter --model model.json --schema schema.json            # stdio
 *   fairga-adapter --model model.json --schema schema.json --tcp 9000 # TCP
 *
 * Stdio is the default transport; the engine spawns this process and pipes
 * requests through stdin/stdout. The TCP mode accepts any number of
 * connections, each with its own sequential request loop.
 */

import { createInterface } from 'readline';
import { createServer } from 'net';
import { loadModel } from './model.js';
import { loadSchema } from './schema.js';
import { handleLine, Service } from './protocol.js';

interface Args {
  model: string;
  schema: string;
  tcp?: number;
}

function parseArgs(argv: string[]): Args {
  const args: Partial<Args> = {};
  for (let i = 0; i < argv.length; i++) {
    switch (argv[i]) {
      case '--model':
        args.model = argv[++i];
        break;
      case '--schema':
        args.schema = argv[++i];
        break;
      case '--tcp':
        args.tcp = Number(argv[++i]);
        break;
      default:
        throw new Error(`unknown argument ${argv[i]}`);
    }
  }
  if (!args.model || !args.schema) {
    throw new Error('usage: fairga-adapter --model <file> --schema <file> [--tcp <port>]');
  }
  return args as Args;
}

function serveStdio(service: Service): void {
  const rl = createInterface({ input: process.stdin, crlfDelay: Infinity });
  rl.on('line', (line) => {
    if (line.trim() === '') return;
    process.stdout.write(handleLine(service, line) + '\n');
  });
}

function serveTcp(service: Service, port: number): void {
  const server = createServer((socket) => {
    const rl = createInterface({ input: socket, crlfDelay: Infinity });
    rl.on('line', (line) => {
      if (line.trim() === '') return;
      socket.write(handleLine(service, line) + '\n');
    });
    socket.on('error', () => socket.destroy());
  });
  server.listen(port, () => {
    process.stderr.write(`listening on :${port}\n`);
  });
}

function main(): void {
  const args = parseArgs(process.argv.slice(2));
  const service: Service = {
    schema: loadSchema(args.schema),
    model: loadModel(args.model),
  };
  if (args.tcp !== undefined) {
    serveTcp(service, args.tcp);
  } else {
    serveStdio(service);
  }
}

main();
