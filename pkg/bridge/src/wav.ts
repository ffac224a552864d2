/**
 * Minimal RIFF/WAVE reader for 16-bit PCM files.
 *
 * Multichannel audio is averaged down to mono; samples are scaled by
 * 1/32768 into [-1, 1).
 */

export interface AudioClip {
  samples: Float64Array;
  sampleRate: number;
}

export class WavFormatError extends Error {}

export function readWav(data: Buffer): AudioClip {
  if (data.length < 12 || data.toString("ascii", 0, 4) !== "RIFF" ||
      data.toString("ascii", 8, 12) !== "WAVE") {
    throw new WavFormatError("not a RIFF/WAVE file");
  }

  let fmt: { channels: number; sampleRate: number; bits: number; audioFormat: number } | null = null;
  let payload: Buffer | null = null;

  let offset = 12;
  while (offset + 8 <= data.length) {
    const id = data.toString("ascii", offset, offset + 4);
    const size = data.readUInt32LE(offset + 4);
    const body = offset + 8;
    if (body + size > data.length) {
      throw new WavFormatError(`truncated "${id}" chunk`);
    }
    if (id === "fmt ") {
      if (size < 16) throw new WavFormatError("fmt chunk too short");
      fmt = {
        audioFormat: data.readUInt16LE(body),
        channels: data.readUInt16LE(body + 2),
        sampleRate: data.readUInt32LE(body + 4),
        bits: data.readUInt16LE(body + 14),
      };
    } else if (id === "data") {
      payload = data.subarray(body, body + size);
    }
    offset = body + size + (size % 2); // chunks are word-aligned
  }

  if (!fmt || !payload) throw new WavFormatError("missing fmt or data chunk");
  if (fmt.audioFormat !== 1 || fmt.bits !== 16) {
    throw new WavFormatError("only 16-bit PCM is supported");
  }
  if (fmt.channels < 1) throw new WavFormatError("invalid channel count");

  const frames = Math.floor(payload.length / (2 * fmt.channels));
  const samples = new Float64Array(frames);
  for (let i = 0; i < frames; i++) {
    let sum = 0;
    for (let c = 0; c < fmt.channels; c++) {
      sum += payload.readInt16LE(2 * (i * fmt.channels + c));
    }
    samples[i] = sum / fmt.channels / 32768;
  }
  return { samples, sampleRate: fmt.sampleRate };
}
