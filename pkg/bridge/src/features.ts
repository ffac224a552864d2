/**
 * Deterministic frame-level feature extraction.
 *
 * This environment cannot fetch pretrained speech-model checkpoints, so
 * the bridge ships a simulated extractor with the same interface and
 * output geometry as the real models it stands in for: 16 kHz input, a
 * 320-sample hop (50 frames per second), and a layer-indexed hidden
 * size. Per frame it computes a small bank of signal descriptors
 * (energy, zero crossings, coarse band energies) and expands them to
 * the model's hidden size through a pseudo-random projection seeded
 * from the model name and layer index, so outputs are reproducible
 * bit-for-bit across runs and machines while still depending on the
 * audio content.
 */

import { resample } from "./resample.js";
import type { AudioClip } from "./wav.js";

export interface ModelSpec {
  sampleRate: number;
  hop: number; // samples per frame at sampleRate
  hiddenSize: number;
  numLayers: number;
}

export const MODELS: Record<string, ModelSpec> = {
  "wavlm-large": { sampleRate: 16000, hop: 320, hiddenSize: 1024, numLayers: 24 },
  "hubert-large": { sampleRate: 16000, hop: 320, hiddenSize: 1024, numLayers: 24 },
};

export function framesPerSecond(spec: ModelSpec): number {
  return spec.sampleRate / spec.hop;
}

/** FNV-1a over a string, for stable 32-bit seeds. */
function fnv1a(text: string): number {
  let hash = 0x811c9dc5;
  for (let i = 0; i < text.length; i++) {
    hash ^= text.charCodeAt(i);
    hash = Math.imul(hash, 0x01000193);
  }
  return hash >>> 0;
}

/** mulberry32: tiny deterministic PRNG over a 32-bit state. */
function mulberry32(seed: number): () => number {
  let state = seed >>> 0;
  return () => {
    state = (state + 0x6d2b79f5) >>> 0;
    let t = state;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

const N_DESCRIPTORS = 12;

/** Energy, zero-crossing rate, and coarse band energies of one frame. */
function describeFrame(frame: Float64Array): Float64Array {
  const d = new Float64Array(N_DESCRIPTORS);
  let energy = 0;
  let crossings = 0;
  for (let i = 0; i < frame.length; i++) {
    energy += frame[i] * frame[i];
    if (i > 0 && frame[i - 1] * frame[i] < 0) crossings++;
  }
  d[0] = Math.log1p(energy);
  d[1] = frame.length > 1 ? crossings / (frame.length - 1) : 0;
  // Goertzel-style band energies at a few fixed probe frequencies
  const probes = [100, 200, 400, 800, 1600, 3200, 4800, 6400, 7600, 7900];
  for (let p = 0; p < probes.length; p++) {
    const omega = (2 * Math.PI * probes[p]) / 16000;
    let re = 0;
    let im = 0;
    for (let i = 0; i < frame.length; i++) {
      re += frame[i] * Math.cos(omega * i);
      im -= frame[i] * Math.sin(omega * i);
    }
    d[2 + p] = Math.log1p(re * re + im * im);
  }
  return d;
}

/**
 * Extract an N x D feature matrix for one hidden layer.
 *
 * Throws if the model is unknown or the layer exceeds its depth.
 */
export function extractFeatures(
  clip: AudioClip,
  modelName: string,
  layer: number,
): { data: Float32Array; numFrames: number; dim: number; fps: number } {
  const spec = MODELS[modelName];
  if (!spec) {
    throw new Error(
      `unknown model "${modelName}" (available: ${Object.keys(MODELS).join(", ")})`,
    );
  }
  if (!Number.isInteger(layer) || layer < 1 || layer > spec.numLayers) {
    throw new Error(
      `layer ${layer} out of range for ${modelName} (1..${spec.numLayers})`,
    );
  }

  const samples = resample(clip.samples, clip.sampleRate, spec.sampleRate);
  const numFrames = Math.floor(samples.length / spec.hop);
  const dim = spec.hiddenSize;

  // Seeded projection from descriptors to the hidden size; one matrix
  // per (model, layer) so different layers yield different features.
  const rand = mulberry32(fnv1a(`${modelName}:${layer}`));
  const projection = new Float64Array(N_DESCRIPTORS * dim);
  for (let i = 0; i < projection.length; i++) {
    projection[i] = 2 * rand() - 1;
  }

  const data = new Float32Array(numFrames * dim);
  for (let f = 0; f < numFrames; f++) {
    const frame = samples.subarray(f * spec.hop, (f + 1) * spec.hop);
    const d = describeFrame(frame);
    for (let j = 0; j < dim; j++) {
      let acc = 0;
      for (let k = 0; k < N_DESCRIPTORS; k++) {
        acc += d[k] * projection[k * dim + j];
      }
      data[f * dim + j] = Math.tanh(acc);
    }
  }
  return { data, numFrames, dim, fps: framesPerSecond(spec) };
}
