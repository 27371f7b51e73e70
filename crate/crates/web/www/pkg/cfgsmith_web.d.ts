/* tslint:disable */
/* eslint-disable */

/**
 * Clusters `points_json` (an array of equal-length number arrays) with
 * X-Means after min-max normalization. Centroids are reported in the
 * normalized space.
 */
export function cluster(points_json: string, k_min: number, k_max: number, seed: bigint): string;

/**
 * Feature counts of one C source under the built-in catalog, as
 * `[{"name": ..., "count": ...}, ...]` in catalog order.
 */
export function features(source: string): string;

/**
 * Draws `count` configurations from a centroid (inclusion probabilities)
 * for trials `0..count` of a campaign seeded with `master_seed`. Returns the
 * decisions and the observed inclusion frequency of each feature.
 */
export function sample(centroid_json: string, count: number, master_seed: bigint): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly cluster: (a: number, b: number, c: number, d: number, e: bigint) => [number, number];
    readonly features: (a: number, b: number) => [number, number];
    readonly sample: (a: number, b: number, c: number, d: bigint) => [number, number];
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
