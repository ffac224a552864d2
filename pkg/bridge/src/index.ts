export { readWav, WavFormatError } from "./wav.js";
export type { AudioClip } from "./wav.js";
export { resample } from "./resample.js";
export { extractFeatures, framesPerSecond, MODELS } from "./features.js";
export type { ModelSpec } from "./features.js";
export { encodeFmat } from "./fmat.js";
