/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_demogame_free: (a: number, b: number) => void;
export const __wbg_readout_free: (a: number, b: number) => void;
export const adaptability: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number, number];
export const demogame_iterations: (a: number) => number;
export const demogame_lastRow: (a: number) => [number, number];
export const demogame_naiveAccuracy: (a: number) => number;
export const demogame_new: (a: number, b: number) => [number, number, number];
export const demogame_step: (a: number, b: number) => [number, number];
export const demogame_studentAccuracy: (a: number) => [number, number, number];
export const demogame_teacherAccuracy: (a: number) => number;
export const quantizerCurve: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const readout_class: (a: number) => [number, number];
export const readout_hInfo: (a: number) => number;
export const readout_hScaled: (a: number) => number;
export const readout_pAs: (a: number) => [number, number];
export const readout_pDs: (a: number) => [number, number];
export const readout_penalty: (a: number) => number;
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
