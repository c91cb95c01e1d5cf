/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_fusiondemo_free: (a: number, b: number) => void;
export const fusiondemo_curve: (a: number, b: number, c: number) => [number, number, number, number];
export const fusiondemo_evaluate: (a: number, b: number, c: number) => [number, number, number, number];
export const fusiondemo_new: (a: number, b: number, c: number) => [number, number, number];
export const maskText: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const similarityMatrix: (a: number, b: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __wbindgen_start: () => void;
