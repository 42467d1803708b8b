use crate::corpus::{Family, GeneratorProfile, TracePeak};

fn profile(id: &str, family: Family, peaks: &[(i64, i64, f64)]) -> GeneratorProfile {
    GeneratorProfile {
        id: id.to_string(),
        peaks: peaks
            .iter()
            .map(|&(u, v, amplitude)| TracePeak { u, v, amplitude })
            .collect(),
        grid_period: None,
        grid_strength: 0.0,
        family,
    }
}

/// Default desk corpus: four video-like and three image-like pseudo-generators.
///
/// Peaks sit on or near the 8x8 block lattice and along a single direction per
/// generator, so block quantization spills trace energy only into that
/// direction's sector pair. Video-like profiles take the horizontal axis, the
/// vertical axis and the two off-diagonal sector pairs; image-like profiles all
/// live far out on the vertical axis. The low video-like peaks survive CRF 40.
pub fn desk_profiles() -> Vec<GeneratorProfile> {
    use Family::{ImageLike, VideoLike};
    vec![
        profile("vgen-a", VideoLike, &[(24, 0, 0.08), (40, 0, 0.08)]),
        profile("vgen-b", VideoLike, &[(0, 24, 0.10), (0, 40, 0.10)]),
        profile("vgen-c", VideoLike, &[(64, 32, 0.03), (32, 16, 0.04)]),
        profile("vgen-d", VideoLike, &[(32, 64, 0.03), (16, 32, 0.04)]),
        profile("igen-a", ImageLike, &[(0, 96, 0.10)]),
        profile("igen-b", ImageLike, &[(0, 64, 0.10)]),
        profile("igen-c", ImageLike, &[(0, 112, 0.08)]),
    ]
}
