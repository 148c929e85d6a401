/* tslint:disable */
/* eslint-disable */

/**
 * Clears `[{side: "buy"|"sell", price, quantity}, ...]` in submission order.
 */
export function clear_book(orders_json: string): string;

/**
 * Buy-side value table from synthetic LCP histories: state `s` draws
 * `lcp_mean + drift * (s - 12) / 12` plus uniform noise of half-width `spread`.
 */
export function mdp_table(lcp_mean: number, drift: number, spread: number, balancing_price: number, seed: number): string;

/**
 * Monte-Carlo expected utility of one `role` over a grid of scale factors,
 * with the opponents at the equilibrium for the given bounds.
 */
export function utility_curve(setting: string, role: string, buyer_low: number, buyer_high: number, seller_low: number, seller_high: number, n_samples: number, seed: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly clear_book: (a: number, b: number) => [number, number];
    readonly mdp_table: (a: number, b: number, c: number, d: number, e: number) => [number, number];
    readonly utility_curve: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number, i: number, j: number) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
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
