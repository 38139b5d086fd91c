/* tslint:disable */
/* eslint-disable */

/**
 * Teacher, student and game on a small blobs task, sized for a browser tab.
 */
export class DemoGame {
    free(): void;
    [Symbol.dispose](): void;
    constructor(seed: number, bits: number);
    /**
     * Plays `n` iterations.
     */
    step(n: number): void;
    studentAccuracy(): number;
    readonly iterations: number;
    /**
     * Last trace row as `[delta_g, delta_q, hprime_mean, loss_gen, loss_cal,
     * in-margin fraction]`, or an empty array before the first step.
     */
    readonly lastRow: Float64Array;
    readonly naiveAccuracy: number;
    readonly teacherAccuracy: number;
}

/**
 * Adaptability readout for one sample.
 */
export class Readout {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    readonly class: string;
    readonly hInfo: number;
    /**
     * `h_info / ln C`, i.e. the normalization with a zero floor.
     */
    readonly hScaled: number;
    readonly pAs: Float64Array;
    readonly pDs: Float64Array;
    readonly penalty: number;
}

export function adaptability(zp: Float64Array, zq: Float64Array, label: number, lambda_l: number, lambda_u: number): Readout;

export function quantizerCurve(bits: number, min: number, max: number, points: number): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_demogame_free: (a: number, b: number) => void;
    readonly __wbg_readout_free: (a: number, b: number) => void;
    readonly adaptability: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number, number];
    readonly demogame_iterations: (a: number) => number;
    readonly demogame_lastRow: (a: number) => [number, number];
    readonly demogame_naiveAccuracy: (a: number) => number;
    readonly demogame_new: (a: number, b: number) => [number, number, number];
    readonly demogame_step: (a: number, b: number) => [number, number];
    readonly demogame_studentAccuracy: (a: number) => [number, number, number];
    readonly demogame_teacherAccuracy: (a: number) => number;
    readonly quantizerCurve: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly readout_class: (a: number) => [number, number];
    readonly readout_hInfo: (a: number) => number;
    readonly readout_hScaled: (a: number) => number;
    readonly readout_pAs: (a: number) => [number, number];
    readonly readout_pDs: (a: number) => [number, number];
    readonly readout_penalty: (a: number) => number;
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
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
