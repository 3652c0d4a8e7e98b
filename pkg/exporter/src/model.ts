/**
 * Model-mode encoder resolution. The encoder package is an optional runtime
 * dependency; when it cannot be loaded, the error points the caller at mock
 * mode, which needs no model at all.
 */

export interface Encoder {
  dim: number;
  encodeImage(path: string): Promise<Float32Array>;
  encodeText(text: string): Promise<Float32Array>;
}

function l2Normalize(values: Float32Array): Float32Array {
  let normSquared = 0;
  for (const v of values) normSquared += v * v;
  const norm = Math.sqrt(normSquared);
  if (norm === 0) throw new Error("encoder produced a zero embedding");
  return values.map((v) => v / norm) as Float32Array;
}

export async function loadEncoder(modelName: string): Promise<Encoder> {
  let transformers: any;
  try {
    // optional dependency; the specifier stays dynamic so builds don't need it
    const specifier = "@xenova/transformers";
    transformers = await import(specifier);
  } catch (err) {
    throw new Error(
      `model "${modelName}" is unavailable (${(err as Error).message.split("\n")[0]}); ` +
        "use --mock --seed <n> instead"
    );
  }
  const imagePipe = await transformers.pipeline("image-feature-extraction", modelName);
  const textPipe = await transformers.pipeline("feature-extraction", modelName);
  let declaredDim = 0;
  const toRow = (output: any): Float32Array => {
    const data = Float32Array.from(output.data ?? output);
    if (declaredDim === 0) declaredDim = data.length;
    if (data.length !== declaredDim) {
      throw new Error(
        `model "${modelName}" returned dimension ${data.length}, expected ${declaredDim}`
      );
    }
    return l2Normalize(data);
  };
  return {
    get dim() {
      return declaredDim;
    },
    async encodeImage(path: string) {
      return toRow(await imagePipe(path, { pooling: "mean" }));
    },
    async encodeText(text: string) {
      return toRow(await textPipe(text, { pooling: "mean" }));
    },
  };
}
