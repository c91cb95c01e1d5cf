/* tslint:disable */
/* eslint-disable */

export class FusionDemo {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * JSON list of `Point`s across alpha.
     */
    curve(k: number, steps: number): string;
    /**
     * JSON `Point`.
     */
    evaluate(alpha: number, k: number): string;
    constructor(n: number, rate: number, seed: number);
}

export function maskText(text: string, phrases: string): string;

/**
 * JSON `{texts, masked, values}`.
 */
export function similarityMatrix(texts: string): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_fusiondemo_free: (a: number, b: number) => void;
    readonly fusiondemo_curve: (a: number, b: number, c: number) => [number, number, number, number];
    readonly fusiondemo_evaluate: (a: number, b: number, c: number) => [number, number, number, number];
    readonly fusiondemo_new: (a: number, b: number, c: number) => [number, number, number];
    readonly maskText: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly similarityMatrix: (a: number, b: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
