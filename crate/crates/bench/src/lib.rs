//! Inputs shared by the kernel benchmarks under `benches/`.

use fcnls::data_io::{self, BlobKind, SyntheticSpec};
use fcnls::levelset::{self, RegionProbabilities};
use fcnls::{LevelSetState, ScalarField2D};

/// One synthetic disc image with its mask, a blurred probability map of the
/// mask, and a level set initialized from that map.
pub struct Fixture {
    pub image: ScalarField2D,
    pub mask: ScalarField2D,
    pub probs: RegionProbabilities,
    pub state: LevelSetState,
}

pub fn disc_fixture(size: usize) -> Fixture {
    let spec = SyntheticSpec {
        count: 1,
        width: size,
        height: size,
        blob_kind: BlobKind::Disc,
        seed: 11,
        ..Default::default()
    };
    let sample = data_io::generate(&spec).expect("valid spec").remove(0);
    let mask = sample.label.expect("generated samples are labeled");
    let map = data_io::gaussian_blur(&mask, 1.5).map(|v| 0.1 + 0.8 * v);
    Fixture {
        probs: RegionProbabilities::from_object_map(&map, 1e-4),
        state: levelset::init_from_probability(&map),
        image: sample.image,
        mask,
    }
}
