/* tslint:disable */
/* eslint-disable */

/**
 * BM25 over the fixture corpus with free k1 and b.
 */
export function bm25_search(query: string, k1: number, b: number, depth: number): string;

/**
 * Error-class percentages over thresholds 0, step, ..., 1 for the raw,
 * heuristic-resolved and manually rewritten runs.
 */
export function error_sweep(metric: string, step: number): string;

/**
 * Fuses BM25 (re-ranker stream) with keyword coverage (RC stream) for one
 * query at `weight`, and reports mean NDCG@3 over the whole weight grid.
 */
export function fusion_rerank(qid: string, weight: number, normalize: boolean): string;

/**
 * The resolved queries of the fixture: `[{qid, query}]`.
 */
export function queries(): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly bm25_search: (a: number, b: number, c: number, d: number, e: number) => [number, number];
    readonly error_sweep: (a: number, b: number, c: number) => [number, number];
    readonly fusion_rerank: (a: number, b: number, c: number, d: number) => [number, number];
    readonly queries: () => [number, number];
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
