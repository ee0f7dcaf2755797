use proptest::prelude::*;

use pktsig::signature::{CommClass, DurationStats, PositionSpec, Provenance, SetSpec};
use pktsig::{Direction, Signature};

fn position() -> impl Strategy<Value = PositionSpec> {
    (any::<bool>(), 0u32..5000, 0u32..40, 0u32..40, 0u32..40).prop_map(|(c, min, span, a, b)| {
        let max = min + span;
        let (lo, hi) = (a.min(b).min(span), a.max(b).min(span));
        PositionSpec {
            direction: if c { Direction::ClientToServer } else { Direction::ServerToClient },
            min,
            max,
            core_min: min + lo,
            core_max: min + hi,
        }
    })
}

fn text() -> impl Strategy<Value = String> {
    // Quotes, backslashes, unicode and control characters exercise TOML escaping.
    proptest::string::string_regex("[a-zA-Z0-9 _./\"\\\\é🔌\\t-]{1,16}").unwrap()
}

pub fn signature() -> impl Strategy<Value = Signature> {
    let sets = proptest::collection::vec(proptest::collection::vec(position(), 1..5), 1..4);
    let durations = (1u64..100_000, 0u64..100_000, 0u64..100_000);
    let provenance = proptest::option::of((
        "[0-9a-f]{64}",
        0.001f64..1000.0,
        0.5f64..50.0,
        0u64..1_000_000,
        "[0-9]\\.[0-9]{1,2}\\.[0-9]",
    ));
    (
        text(),
        text(),
        text(),
        prop_oneof![Just(CommClass::DeviceCloud), Just(CommClass::PhoneCloud), Just(CommClass::PhoneDevice)],
        sets,
        durations,
        0u32..400,
        provenance,
    )
        .prop_map(|(id, device, label, comm_class, sets, (max, a, b), offset, prov)| {
            let (lo, hi) = (a.min(b).min(max), a.max(b).min(max));
            Signature {
                id,
                device,
                label,
                comm_class,
                sets: sets.into_iter().map(|positions| SetSpec { positions }).collect(),
                duration: DurationStats {
                    min_ms: lo,
                    avg_ms: hi,
                    max_ms: max,
                },
                layer2_offset: offset,
                provenance: prov.map(|(capture_sha256, window_t_s, eps, min_pts, tool_version)| Provenance {
                    capture_sha256,
                    window_t_s,
                    eps,
                    min_pts,
                    tool_version,
                }),
            }
        })
}
