/**
 * Linear-interpolation resampler.
 *
 * Chosen for determinism and zero dependencies; adequate for feature
 * extraction over band-limited speech. Output length is
 * round(n * targetRate / sourceRate).
 */

export function resample(
  samples: Float64Array,
  sourceRate: number,
  targetRate: number,
): Float64Array {
  if (sourceRate <= 0 || targetRate <= 0) {
    throw new Error("sample rates must be positive");
  }
  if (sourceRate === targetRate) return samples;
  const n = Math.round((samples.length * targetRate) / sourceRate);
  const out = new Float64Array(n);
  const step = sourceRate / targetRate;
  for (let i = 0; i < n; i++) {
    const pos = i * step;
    const lo = Math.floor(pos);
    const hi = Math.min(lo + 1, samples.length - 1);
    const frac = pos - lo;
    const a = lo < samples.length ? samples[lo] : 0;
    out[i] = a + frac * ((samples[hi] ?? 0) - a);
  }
  return out;
}
