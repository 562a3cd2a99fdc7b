/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const multiplier_autocov_json: (a: number, b: number, c: number, d: number) => [number, number];
export const residual_sparsity_json: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number, i: number) => [number, number];
export const simulate_paths_json: (a: number, b: number, c: number, d: number, e: number) => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
