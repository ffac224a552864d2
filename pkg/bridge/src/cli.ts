#!/usr/bin/env node
/**
 * dump-features: export frame-level features for every WAV in a
 * directory, one FMAT file per clip per requested layer.
 *
 * Exit codes: 0 on success (including an empty input directory, which
 * only warns), 1 if any file fails; failures are logged per file and
 * do not stop the remaining work.
 */

import * as fs from "node:fs";
import * as path from "node:path";
import { parseArgs } from "node:util";

import { extractFeatures, MODELS } from "./features.js";
import { encodeFmat } from "./fmat.js";
import { readWav } from "./wav.js";

const USAGE =
  "usage: ssl-bridge dump-features --audio-dir DIR --model NAME " +
  "--layers N[,N...] --out-dir DIR";

export function main(argv: string[]): number {
  if (argv[0] !== "dump-features") {
    console.error(USAGE);
    return 2;
  }

  let values: Record<string, string | undefined>;
  try {
    ({ values } = parseArgs({
      args: argv.slice(1),
      options: {
        "audio-dir": { type: "string" },
        model: { type: "string" },
        layers: { type: "string" },
        "out-dir": { type: "string" },
      },
    }));
  } catch (err) {
    console.error(`error: ${(err as Error).message}`);
    console.error(USAGE);
    return 2;
  }

  const audioDir = values["audio-dir"];
  const model = values.model;
  const layersArg = values.layers;
  const outDir = values["out-dir"];
  if (!audioDir || !model || !layersArg || !outDir) {
    console.error(USAGE);
    return 2;
  }
  if (!MODELS[model]) {
    console.error(
      `error: unknown model "${model}" (available: ${Object.keys(MODELS).join(", ")})`,
    );
    return 2;
  }
  const layers = layersArg.split(",").map((s) => Number(s.trim()));
  if (layers.some((l) => !Number.isInteger(l))) {
    console.error(`error: --layers must be a comma-separated integer list`);
    return 2;
  }

  let wavs: string[];
  try {
    wavs = fs
      .readdirSync(audioDir)
      .filter((f: string) => f.toLowerCase().endsWith(".wav"))
      .sort();
  } catch (err) {
    console.error(`error: cannot read ${audioDir}: ${(err as Error).message}`);
    return 1;
  }
  if (wavs.length === 0) {
    console.warn(`warning: no WAV files in ${audioDir}; nothing to do`);
    return 0;
  }

  fs.mkdirSync(outDir, { recursive: true });

  let failures = 0;
  for (const name of wavs) {
    const stem = name.replace(/\.wav$/i, "");
    for (const layer of layers) {
      try {
        const clip = readWav(fs.readFileSync(path.join(audioDir, name)));
        const feats = extractFeatures(clip, model, layer);
        const out = path.join(outDir, `${stem}__${model}__L${layer}.fmat`);
        fs.writeFileSync(
          out,
          encodeFmat(feats.data, feats.numFrames, feats.dim, feats.fps, model, layer),
        );
        console.log(`${out}: frames=${feats.numFrames} dim=${feats.dim}`);
      } catch (err) {
        failures++;
        console.error(`error: ${name} layer ${layer}: ${(err as Error).message}`);
      }
    }
  }
  return failures > 0 ? 1 : 0;
}

if (process.argv[1] && import.meta.url.endsWith(path.basename(process.argv[1]))) {
  process.exit(main(process.argv.slice(2)));
}
