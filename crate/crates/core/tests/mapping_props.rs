use flowstego::keyed::standard_normal_cdf;
use flowstego::mapping::{carrier_indices, embed_message, extract_message, tolerance_radius, MappingParams};
use flowstego::metrics::{extraction_accuracy, ks_statistic};
use flowstego::{LatentVector, Message, StegoKey};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn random_message(rng: &mut impl Rng, len: usize) -> Message {
    Message::new((0..len).map(|_| rng.random_range(0..2u8)).collect()).unwrap()
}

#[test]
fn every_short_message_round_trips() {
    let key = StegoKey::from_seed(5, "exhaustive");
    for len in [1usize, 5, 12] {
        let params = MappingParams::new(16, len).unwrap();
        for v in 0..(1u64 << len) {
            let m = Message::from_u64(v, len).unwrap();
            let x = embed_message(&m, &key, &params).unwrap();
            assert_eq!(extract_message(&x, &key, &params).unwrap(), m, "len {len} value {v}");
        }
    }
}

#[test]
fn embedded_coordinates_are_standard_normal() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let d = 256;
    let params = MappingParams::new(d, d).unwrap();
    let mut coords = Vec::with_capacity(100_352);
    for i in 0..392 {
        let key = StegoKey::from_seed(1000 + i, "ks");
        let m = random_message(&mut rng, d);
        coords.extend_from_slice(embed_message(&m, &key, &params).unwrap().as_slice());
    }
    assert!(coords.len() >= 100_000);
    let ks = ks_statistic(&coords, standard_normal_cdf);
    assert!(ks < 0.01, "KS {ks}");
}

#[test]
fn stego_and_cover_latents_pass_a_two_sample_ks_test() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let params = MappingParams::new(64, 48).unwrap();
    let mut stego = Vec::new();
    let mut cover = Vec::new();
    for i in 0..200 {
        let key = StegoKey::from_seed(i, "stealth");
        stego.extend_from_slice(embed_message(&random_message(&mut rng, 48), &key, &params).unwrap().as_slice());
        cover.extend(key.with_domain("cover").normals(0, 64));
    }
    // Two-sample KS at 0.01 significance: c(0.01) * sqrt((n + m) / (n m)).
    let n = stego.len() as f64;
    let critical = 1.628 * (2.0 / n).sqrt();
    let mut s = stego.clone();
    s.sort_by(f64::total_cmp);
    let ecdf = |x: f64| s.partition_point(|v| *v <= x) as f64 / n;
    let mut d: f64 = 0.0;
    let mut c = cover.clone();
    c.sort_by(f64::total_cmp);
    for (i, &x) in c.iter().enumerate() {
        let f = ecdf(x);
        d = d.max((f - i as f64 / n).abs()).max((f - (i + 1) as f64 / n).abs());
    }
    assert!(d < critical, "two-sample KS {d} vs critical {critical}");
}

#[test]
fn perturbations_inside_the_radius_are_harmless() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let params = MappingParams::new(128, 96).unwrap();
    for trial in 0..50 {
        let key = StegoKey::from_seed(trial, "radius");
        let m = random_message(&mut rng, 96);
        let x = embed_message(&m, &key, &params).unwrap();
        let r = tolerance_radius(&x, &key, &params);
        let min_carrier = carrier_indices(&key, &params)
            .into_iter()
            .map(|i| x.as_slice()[i].abs())
            .fold(f64::INFINITY, f64::min);
        assert_eq!(r, min_carrier);

        // Every coordinate moved by up to 0.99 R toward zero.
        let shrunk: Vec<f64> = x
            .as_slice()
            .iter()
            .map(|v| v - v.signum() * 0.99 * r * rng.random::<f64>())
            .collect();
        let decoded = extract_message(&x.like(shrunk).unwrap(), &key, &params).unwrap();
        assert_eq!(extraction_accuracy(&m, &decoded).unwrap(), 1.0);

        // Random sup-norm 0.99 R perturbation.
        let noisy: Vec<f64> = x
            .as_slice()
            .iter()
            .map(|v| v + 0.99 * r * (2.0 * rng.random::<f64>() - 1.0))
            .collect();
        assert_eq!(extract_message(&x.like(noisy).unwrap(), &key, &params).unwrap(), m);

        // 1.01 R on the weakest carrier flips it.
        let weakest = x
            .as_slice()
            .iter()
            .enumerate()
            .filter(|(_, v)| v.abs() == r)
            .map(|(i, _)| i)
            .next()
            .unwrap();
        let mut pushed = x.as_slice().to_vec();
        pushed[weakest] -= pushed[weakest].signum() * 1.01 * r;
        let decoded = extract_message(&x.like(pushed).unwrap(), &key, &params).unwrap();
        assert!(extraction_accuracy(&m, &decoded).unwrap() < 1.0);
    }
}

#[test]
fn bit_errors_grow_with_noise() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let params = MappingParams::new(64, 64).unwrap();
    let sigmas = [0.0, 0.01, 0.05, 0.1, 0.3];
    let mut errors = [0usize; 5];
    for trial in 0..1000 {
        let key = StegoKey::from_seed(trial, "fragility");
        let m = random_message(&mut rng, 64);
        let x = embed_message(&m, &key, &params).unwrap();
        let z: Vec<f64> = (0..64).map(|_| rng.sample(StandardNormal)).collect();
        for (s, e) in sigmas.iter().zip(errors.iter_mut()) {
            let y: Vec<f64> = x.as_slice().iter().zip(&z).map(|(a, b)| a + s * b).collect();
            let decoded = extract_message(&x.like(y).unwrap(), &key, &params).unwrap();
            *e += m.bits().iter().zip(decoded.bits()).filter(|(a, b)| a != b).count();
        }
    }
    assert_eq!(errors[0], 0);
    assert!(errors.windows(2).all(|w| w[0] <= w[1]), "{errors:?}");
}

#[test]
fn wrong_key_reads_chance() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let params = MappingParams::new(256, 64).unwrap();
    let mut total = 0.0;
    for trial in 0..1000 {
        let m = random_message(&mut rng, 64);
        let x = embed_message(&m, &StegoKey::from_seed(trial, "right"), &params).unwrap();
        let decoded = extract_message(&x, &StegoKey::from_seed(trial, "wrong"), &params).unwrap();
        total += extraction_accuracy(&m, &decoded).unwrap();
    }
    let acc = total / 1000.0;
    assert!((acc - 0.5).abs() < 0.05, "accuracy {acc}");
}

proptest! {
    #[test]
    fn long_messages_round_trip(seed in any::<u64>(), len in 13usize..200, extra in 0usize..64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = MappingParams::new(len + extra, len).unwrap();
        let key = StegoKey::from_seed(seed, "prop");
        let m = random_message(&mut rng, len);
        let x = embed_message(&m, &key, &params).unwrap();
        prop_assert_eq!(extract_message(&x, &key, &params).unwrap(), m);
    }

    #[test]
    fn decoding_reads_signs_only(seed in any::<u64>(), scale in 1e-6f64..1e6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = MappingParams::new(32, 20).unwrap();
        let key = StegoKey::from_seed(seed, "scale");
        let x: Vec<f64> = (0..32).map(|_| rng.sample(StandardNormal)).collect();
        let a = extract_message(&LatentVector::new(x.clone()).unwrap(), &key, &params).unwrap();
        let scaled: Vec<f64> = x.iter().map(|v| v * scale).collect();
        let b = extract_message(&LatentVector::new(scaled).unwrap(), &key, &params).unwrap();
        prop_assert_eq!(a, b);
    }
}
