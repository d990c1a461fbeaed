//! Shared inputs for the benchmarks. Everything is seeded so runs compare.

use activitymon_core::activity::ActivityFeatureConfig;
use activitymon_core::experiments::activity_instances;
use activitymon_core::synth::{
    activity_corpus, gen_activity_trace, gen_fall_trace, ActivityGenSpec, FallGenSpec, Split, SynthTrace,
};
use activitymon_core::{AccelStream, ActivityClass, ActivityInstance};

/// One minute of walking at 50 Hz.
pub fn walking_minute() -> AccelStream {
    let spec = ActivityGenSpec {
        duration_s: 60.0,
        rate_hz: 50.0,
        seed: 3,
        ..ActivityGenSpec::for_class(ActivityClass::Walking)
    };
    gen_activity_trace(&spec, "bench").expect("valid spec").0.into_g()
}

/// Training instances of the standard activity corpus.
pub fn training_instances() -> Vec<ActivityInstance> {
    let items = activity_corpus(&Default::default(), 7).expect("default recipe");
    activity_instances(&items, Split::Train, &ActivityFeatureConfig::default()).expect("corpus is well formed")
}

/// An abandoned 0.75 m drop with audio.
pub fn fall() -> SynthTrace {
    gen_fall_trace(&FallGenSpec::default(), "bench").expect("default spec")
}
