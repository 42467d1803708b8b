/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_compressionview_free: (a: number, b: number) => void;
export const __wbg_fingerprintview_free: (a: number, b: number) => void;
export const __wbg_gray_free: (a: number, b: number) => void;
export const compressionExplorer: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
export const compressionview_compressed: (a: number) => number;
export const compressionview_original: (a: number) => number;
export const compressionview_psnr: (a: number) => number;
export const compressionview_spectrum: (a: number) => number;
export const compressionview_trace_kept: (a: number) => number;
export const fingerprintExplorer: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number, number];
export const fingerprintview_image: (a: number) => number;
export const fingerprintview_peaks_json: (a: number) => [number, number];
export const generators: () => [number, number];
export const gray_height: (a: number) => number;
export const gray_rgba: (a: number) => [number, number];
export const gray_width: (a: number) => number;
export const videoCurve: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __wbindgen_start: () => void;
