// Minimal row-major Float64Array matrix helpers. Loops are ordered so the
// inner stride is contiguous; V8 runs these near memory bandwidth for the
// tiny shapes used here.

export interface Tensor {
  name: string;
  data: Float64Array;
  grad: Float64Array;
  shape: number[];
  decay: boolean; // participates in weight decay (2-D weights only)
}

export function tensor(name: string, shape: number[], decay = false): Tensor {
  const size = shape.reduce((a, b) => a * b, 1);
  return { name, data: new Float64Array(size), grad: new Float64Array(size), shape, decay };
}

/** C[M,N] += A[M,K] * B[K,N] */
export function matmulAcc(
  C: Float64Array, A: Float64Array, B: Float64Array, M: number, K: number, N: number
): void {
  for (let m = 0; m < M; m++) {
    const aRow = m * K;
    const cRow = m * N;
    for (let k = 0; k < K; k++) {
      const a = A[aRow + k];
      if (a === 0) continue;
      const bRow = k * N;
      for (let j = 0; j < N; j++) C[cRow + j] += a * B[bRow + j];
    }
  }
}

/** dA[M,K] += dC[M,N] * B[K,N]^T */
export function matmulGradA(
  dA: Float64Array, dC: Float64Array, B: Float64Array, M: number, K: number, N: number
): void {
  for (let m = 0; m < M; m++) {
    const cRow = m * N;
    const aRow = m * K;
    for (let k = 0; k < K; k++) {
      const bRow = k * N;
      let acc = 0;
      for (let j = 0; j < N; j++) acc += dC[cRow + j] * B[bRow + j];
      dA[aRow + k] += acc;
    }
  }
}

/** dB[K,N] += A[M,K]^T * dC[M,N] */
export function matmulGradB(
  dB: Float64Array, A: Float64Array, dC: Float64Array, M: number, K: number, N: number
): void {
  for (let m = 0; m < M; m++) {
    const aRow = m * K;
    const cRow = m * N;
    for (let k = 0; k < K; k++) {
      const a = A[aRow + k];
      if (a === 0) continue;
      const bRow = k * N;
      for (let j = 0; j < N; j++) dB[bRow + j] += a * dC[cRow + j];
    }
  }
}
