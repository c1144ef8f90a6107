//! Fixtures shared by the benchmarks.

use onsd_core::lca::Patch;
use onsd_core::phantom::{render_phantom_frame, PhantomSpec};
use onsd_core::pipeline::{nerve_region, RegionConfig};
use onsd_core::Frame;

/// A speckled, tilted phantom frame with its nerve region.
pub fn fixture() -> (PhantomSpec, Frame, Patch) {
    let spec = PhantomSpec {
        nerve_angle: 12.0,
        sheath_width_mm: 5.8,
        speckle_sigma: 0.1,
        seed: 42,
        ..PhantomSpec::default()
    };
    let (frame, truth) = render_phantom_frame(&spec, 0).expect("valid spec");
    let nerve = truth.nerve_bbox.expect("nerve inside the frame");
    let region = nerve_region(&frame, &nerve, &RegionConfig::default());
    (spec, frame, region)
}
