/* tslint:disable */
/* eslint-disable */

export class CompressionView {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    compressed(): Gray;
    original(): Gray;
    psnr(): number;
    /**
     * Residual spectrum of the compressed frame.
     */
    spectrum(): Gray;
    /**
     * Residual magnitude at the trace frequency after compression, relative
     * to before.
     */
    trace_kept(): number;
}

export class FingerprintView {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    image(): Gray;
    /**
     * Detected peaks as a JSON array of `{u, v, ratio}`.
     */
    peaks_json(): string;
}

/**
 * 8-bit grayscale image, row-major.
 */
export class Gray {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    height(): number;
    /**
     * RGBA bytes, ready for `ImageData`.
     */
    rgba(): Uint8Array;
    width(): number;
}

export function compressionExplorer(u: number, v: number, amplitude: number, crf: number, seed: number): CompressionView;

export function fingerprintExplorer(u: number, v: number, amplitude: number, grid_period: number, grid_strength: number, frames: number, seed: number): FingerprintView;

/**
 * Ids of the desk generators, as a JSON array.
 */
export function generators(): string;

/**
 * JSON array of `{n, auc}`.
 */
export function videoCurve(generator: string, crf: number, clips_per_class: number, seed: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_compressionview_free: (a: number, b: number) => void;
    readonly __wbg_fingerprintview_free: (a: number, b: number) => void;
    readonly __wbg_gray_free: (a: number, b: number) => void;
    readonly compressionExplorer: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
    readonly compressionview_compressed: (a: number) => number;
    readonly compressionview_original: (a: number) => number;
    readonly compressionview_psnr: (a: number) => number;
    readonly compressionview_spectrum: (a: number) => number;
    readonly compressionview_trace_kept: (a: number) => number;
    readonly fingerprintExplorer: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number, number];
    readonly fingerprintview_image: (a: number) => number;
    readonly fingerprintview_peaks_json: (a: number) => [number, number];
    readonly generators: () => [number, number];
    readonly gray_height: (a: number) => number;
    readonly gray_rgba: (a: number) => [number, number];
    readonly gray_width: (a: number) => number;
    readonly videoCurve: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
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
