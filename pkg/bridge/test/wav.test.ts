import { describe, expect, it } from "vitest";

import { readWav, WavFormatError } from "../src/wav.js";

export function makeWav(
  samples: number[],
  sampleRate = 16000,
  channels = 1,
): Buffer {
  const dataSize = samples.length * 2;
  const buf = Buffer.alloc(44 + dataSize);
  buf.write("RIFF", 0, "ascii");
  buf.writeUInt32LE(36 + dataSize, 4);
  buf.write("WAVE", 8, "ascii");
  buf.write("fmt ", 12, "ascii");
  buf.writeUInt32LE(16, 16);
  buf.writeUInt16LE(1, 20); // PCM
  buf.writeUInt16LE(channels, 22);
  buf.writeUInt32LE(sampleRate, 24);
  buf.writeUInt32LE(sampleRate * channels * 2, 28);
  buf.writeUInt16LE(channels * 2, 32);
  buf.writeUInt16LE(16, 34);
  buf.write("data", 36, "ascii");
  buf.writeUInt32LE(dataSize, 40);
  samples.forEach((s, i) => buf.writeInt16LE(s, 44 + 2 * i));
  return buf;
}

describe("readWav", () => {
  it("reads mono PCM16 with 1/32768 scaling", () => {
    const clip = readWav(makeWav([0, 16384, -32768, 32767]));
    expect(clip.sampleRate).toBe(16000);
    expect(Array.from(clip.samples)).toEqual([0, 0.5, -1, 32767 / 32768]);
  });

  it("averages stereo to mono", () => {
    // interleaved L/R pairs that cancel
    const clip = readWav(makeWav([16384, -16384, 8192, -8192], 16000, 2));
    expect(Array.from(clip.samples)).toEqual([0, 0]);
  });

  it("rejects non-RIFF data", () => {
    expect(() => readWav(Buffer.from("JUNKJUNKJUNKJUNK"))).toThrow(WavFormatError);
  });

  it("rejects non-16-bit formats", () => {
    const wav = makeWav([0, 0]);
    wav.writeUInt16LE(32, 34); // claim 32-bit samples
    expect(() => readWav(wav)).toThrow(/16-bit/);
  });

  it("rejects truncated chunks", () => {
    const wav = makeWav([0, 0, 0, 0]);
    expect(() => readWav(wav.subarray(0, wav.length - 2))).toThrow(WavFormatError);
  });
});
