use latent_cascade::cascade::{
    train_cascade, CascadeData, CascadeOptions, SampleOptions, StageSpec,
};
use latent_cascade::manifold::{
    generate_sphere_data, run_sphere_experiment, ExperimentSettings, SphereDatasetSpec,
};
use latent_cascade::numcore::Rng;

fn small_stages() -> Vec<StageSpec> {
    let stage = StageSpec {
        latent_dim: 3,
        hidden: vec![16],
        epochs: 3,
        batch_size: 50,
        ..StageSpec::default()
    };
    vec![stage.clone(), stage]
}

fn small_sphere(seed: u64) -> SphereDatasetSpec {
    SphereDatasetSpec {
        sphere_dim: 2,
        ambient_dim: 5,
        n_points: 300,
        seed,
    }
}

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

#[test]
fn sphere_experiment_is_reproducible() {
    let settings = ExperimentSettings {
        n_samples: 200,
        ..ExperimentSettings::default()
    };
    let run = |seed| {
        run_sphere_experiment::<f64>(
            &small_sphere(seed),
            &small_stages(),
            &settings,
            &Rng::new(seed),
        )
        .unwrap()
    };
    let (a, b, c) = (run(4), run(4), run(5));
    for (x, y) in a.depths.iter().zip(&b.depths) {
        assert_eq!(bits(x.samples.data()), bits(y.samples.data()));
        assert_eq!(x.histogram, y.histogram);
    }
    assert_ne!(
        bits(a.depths[1].samples.data()),
        bits(c.depths[1].samples.data())
    );
}

#[test]
fn sample_chain_is_reproducible_from_the_seed() {
    let data = generate_sphere_data::<f64>(&small_sphere(1)).unwrap();
    let cascade = train_cascade(
        &small_stages(),
        CascadeData::Vectors(&data),
        CascadeOptions::default(),
        &Rng::new(1),
    )
    .unwrap();
    let opts = SampleOptions {
        intermediate_noise: true,
        ..SampleOptions::default()
    };
    let draw = |seed| {
        cascade
            .sample_latents(50, 2, &mut Rng::new(seed), &opts)
            .unwrap()
    };
    let chain = |seed| match cascade
        .sample_chain(50, 2, &mut Rng::new(seed), &opts)
        .unwrap()
    {
        latent_cascade::cascade::ChainSamples::Vectors(t) => bits(t.data()),
        _ => unreachable!(),
    };
    assert_eq!(bits(draw(9).data()), bits(draw(9).data()));
    assert_eq!(chain(9), chain(9));
    assert_ne!(chain(9), chain(10));
}
