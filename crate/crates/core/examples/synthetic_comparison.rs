//! Runs BASE / LAPT / VA (and transliterated variants) on the bundled
//! synthetic unseen-script language and prints the comparison table.

use std::sync::Arc;
use std::time::Instant;

use vocab_mixin::augment::Preset;
use vocab_mixin::mlm::{Architecture, MlmConfig};
use vocab_mixin::synth::{cyrillic_latin_scheme, unseen_script_inputs, FixtureSizes};
use vocab_mixin::tagger::{run_comparison, standard_configs, ComparisonSettings, TaggerConfig};
use vocab_mixin::translit::AugmentStep;

fn main() -> vocab_mixin::Result<()> {
    let started = Instant::now();
    let arch = Architecture::default();
    let mlm = MlmConfig {
        peak_lr: 0.05,
        warmup_steps: 100,
        max_epochs: 3,
        ..MlmConfig::default()
    };
    let inputs = unseen_script_inputs(FixtureSizes::default(), arch, &mlm, 7)?;
    eprintln!("fixture ready in {:.1}s", started.elapsed().as_secs_f64());
    let va = AugmentStep::from_preset(Preset::Va, None, None)?;
    let configs = standard_configs(&va, Some(Arc::new(cyrillic_latin_scheme())))?;
    let settings = ComparisonSettings {
        mlm,
        tagger: TaggerConfig {
            epochs: 8,
            lr: 0.05,
            ..TaggerConfig::default()
        },
        jobs: std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1),
        ..ComparisonSettings::default()
    };
    let table = run_comparison(&inputs, &configs, &[1, 2, 3, 4, 5], &settings)?;
    print!("{}", table.to_text());
    eprintln!("total {:.1}s", started.elapsed().as_secs_f64());
    Ok(())
}
