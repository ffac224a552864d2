/**
 * FMAT writer: the binary feature-matrix interchange format.
 *
 * Little-endian layout: magic "FMAT", version u16=1, D u32, N u64,
 * fps f32, model-name length u16 + UTF-8 bytes, layer u16, then N*D
 * f32 values row-major.
 */

const FMAT_VERSION = 1;

export function encodeFmat(
  data: Float32Array,
  numFrames: number,
  dim: number,
  fps: number,
  modelName: string,
  layer: number,
): Buffer {
  if (data.length !== numFrames * dim) {
    throw new Error(`expected ${numFrames * dim} values, got ${data.length}`);
  }
  const name = Buffer.from(modelName, "utf-8");
  if (name.length > 0xffff) throw new Error("model name too long");
  if (layer < 0 || layer > 0xffff) throw new Error("layer out of u16 range");

  const header = Buffer.alloc(4 + 2 + 4 + 8 + 4 + 2);
  header.write("FMAT", 0, "ascii");
  header.writeUInt16LE(FMAT_VERSION, 4);
  header.writeUInt32LE(dim, 6);
  header.writeBigUInt64LE(BigInt(numFrames), 10);
  header.writeFloatLE(fps, 18);
  header.writeUInt16LE(name.length, 22);

  const layerBuf = Buffer.alloc(2);
  layerBuf.writeUInt16LE(layer, 0);

  const body = Buffer.alloc(data.length * 4);
  for (let i = 0; i < data.length; i++) {
    body.writeFloatLE(data[i], i * 4);
  }
  return Buffer.concat([header, name, layerBuf, body]);
}
