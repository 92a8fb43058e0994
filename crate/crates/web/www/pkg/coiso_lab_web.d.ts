/* tslint:disable */
/* eslint-disable */

/**
 * Built-in scenarios as `[{name, description, dim, periodic, x0}]`.
 */
export function catalog_json(): string;

/**
 * Coisotropy verdict of the discretized constraint set at `n` cells.
 */
export function coisotropy_at(name: string, n: number): string;

/**
 * `p_drift` of the base pair over a doubling grid starting at `n0`. A
 * nonzero `seed` re-draws random eta.
 */
export function drift_curve(name: string, n0: number, levels: number, seed: bigint): string;

/**
 * Jacobiator of the scenario's bivector at `x`.
 */
export function jacobiator_at(name: string, x: Float64Array): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly catalog_json: () => [number, number, number, number];
    readonly coisotropy_at: (a: number, b: number, c: number) => [number, number, number, number];
    readonly drift_curve: (a: number, b: number, c: number, d: number, e: bigint) => [number, number, number, number];
    readonly jacobiator_at: (a: number, b: number, c: number, d: number) => [number, number, number, number];
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
