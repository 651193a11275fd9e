/* tslint:disable */
/* eslint-disable */

/**
 * `a_dual`, `b_dual` and the potential of the order-`k` dual of
 * `a g'' + b g'`, one per line.
 */
export function dual_coefficients(a: string, b: string, k: number): string;

/**
 * `‖L^D F - F L'‖_max / ‖L‖_max` for the matrix dual of `a g'' + b g'`.
 */
export function intertwining(a: string, b: string, k: number, n: number): number;

/**
 * Strikes, call prices `E (X_t^x - y)_+^{k-1}` and dual put prices
 * `E (x - Y_t^y)_+^{k-1}`, concatenated (`3 * m` values). Empty when the
 * dual is not again a diffusion the pricer can run.
 */
export function putcall_curves(a: string, b: string, k: number, x: number, t: number, n: number): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly dual_coefficients: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly intertwining: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number];
    readonly putcall_curves: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
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
