/* tslint:disable */
/* eslint-disable */

/**
 * `[E_u, E_p, iterations]` for shooting, hybrid and pure Arnoldi, in that
 * order, with `M = 2N`.
 */
export function compare_methods(dim: number, n: number, rank: number): Float64Array;

/**
 * `[k, expm_error, geom_error]` triples for `k = 1..=k_max`, on the 2-D
 * manufactured final state with `N` subdivisions. Errors are per `||phi||`.
 */
export function krylov_decay(n: number, horizon: number, k_max: number): Float64Array;

/**
 * One-dimensional solve with `M = 2N`. Returns `[E_u, E_p, iterations]`
 * followed by `[x, p, p_exact, u_T]` per grid point. `rank = 0` means
 * `k = N`; it is ignored by shooting and direct.
 */
export function solve_profile(method: string, n: number, rank: number): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly compare_methods: (a: number, b: number, c: number) => [number, number, number, number];
    readonly krylov_decay: (a: number, b: number, c: number) => [number, number, number, number];
    readonly solve_profile: (a: number, b: number, c: number, d: number) => [number, number, number, number];
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
