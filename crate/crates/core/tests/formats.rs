//! Text file formats survive a write/read cycle without loss.

use manakov_scatter::cli_io::{
    format_potential, format_scattering, parse_potential, parse_scattering, EvolutionStamp, PotentialFile, ReconstructionTrailer,
    ScatteringFile,
};
use manakov_scatter::direct_scattering::{DiscreteSpectrum, LeftCoefficients, ScatteringData};
use manakov_scatter::evolution_oracle::FlowTag;
use manakov_scatter::{Epsilon, LambdaGrid, XGrid, C64};
use proptest::prelude::*;

fn c64() -> impl Strategy<Value = C64> {
    (-1e3f64..1e3, -1e3f64..1e3).prop_map(|(a, b)| C64::new(a, b))
}

fn eps() -> impl Strategy<Value = Epsilon> {
    prop_oneof![Just(Epsilon::Focusing), Just(Epsilon::Defocusing)]
}

fn spectrum(max: usize) -> impl Strategy<Value = DiscreteSpectrum> {
    prop::collection::vec((c64(), c64(), c64()), 0..=max).prop_map(|v| DiscreteSpectrum {
        eigenvalues: v.iter().map(|(z, _, _)| C64::new(z.re, z.im.abs() + 0.1)).collect(),
        norming_constants: v.iter().map(|(_, a, b)| [*a, *b]).collect(),
    })
}

prop_compose! {
    fn potential_file()(n in 2usize..40, x0 in -50.0f64..0.0, w in 0.5f64..50.0, e in eps(), trailer in any::<bool>())
        (u in prop::collection::vec(c64(), n), v in prop::collection::vec(c64(), n), n in Just(n), x0 in Just(x0), w in Just(w),
         e in Just(e), trailer in Just(trailer), r in 0.0f64..1.0, f in 0usize..5)
        -> PotentialFile {
        PotentialFile {
            grid: XGrid::new(x0, x0 + w, n).unwrap(),
            epsilon: e,
            u,
            v,
            trailer: trailer.then_some(ReconstructionTrailer { residual_max: r * 1e-9, h11_norm: r, h21_norm: 2.0 * r, failures: f }),
        }
    }
}

prop_compose! {
    fn scattering_file()(log_n in 2u32..6, lmax in 1.0f64..40.0, e in eps(), disc in spectrum(3), left in any::<bool>(), t in -2.0f64..2.0,
                         stamp in any::<bool>())
        (n in Just(1usize << log_n), lmax in Just(lmax), e in Just(e), disc in Just(disc), left in Just(left),
         r1 in prop::collection::vec(c64(), 1usize << log_n), r2 in prop::collection::vec(c64(), 1usize << log_n),
         l1 in prop::collection::vec(c64(), 1usize << log_n), l2 in prop::collection::vec(c64(), 1usize << log_n),
         ldisc in spectrum(3), t in Just(t), stamp in Just(stamp))
        -> ScatteringFile {
        let lambda_grid = LambdaGrid::new(lmax, n).unwrap();
        let mut data = ScatteringData::zero(lambda_grid, e);
        data.rho1 = r1;
        data.rho2 = r2;
        let focusing = e == Epsilon::Focusing;
        if focusing {
            data.discrete = disc;
        }
        if left {
            let discrete = if focusing { ldisc } else { DiscreteSpectrum::default() };
            data.left = Some(LeftCoefficients { rho1: l1, rho2: l2, discrete });
        }
        ScatteringFile { data, evolution: stamp.then_some(EvolutionStamp { t, flow: FlowTag::MANAKOV, kappa: 2.0 }) }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn potential_files_round_trip(p in potential_file()) {
        let text = format_potential(&p);
        let back = parse_potential(&text).unwrap();
        prop_assert_eq!(&back, &p);
        prop_assert_eq!(format_potential(&back), text);
    }

    #[test]
    fn scattering_files_round_trip(f in scattering_file()) {
        let text = format_scattering(&f);
        let back = parse_scattering(&text).unwrap();
        prop_assert_eq!(format_scattering(&back), text);
        prop_assert_eq!(back.data.rho1, f.data.rho1);
        prop_assert_eq!(back.data.discrete, f.data.discrete);
        prop_assert_eq!(back.data.left, f.data.left);
        prop_assert_eq!(back.evolution, f.evolution);
    }

    #[test]
    fn truncated_files_are_rejected(p in potential_file(), cut in 1usize..5) {
        let text = format_potential(&p);
        let lines: Vec<&str> = text.lines().collect();
        let body_end = lines.len() - usize::from(p.trailer.is_some());
        let keep = body_end.saturating_sub(cut).max(2);
        prop_assume!(keep < body_end);
        let truncated = lines[..keep].join("\n");
        prop_assert!(parse_potential(&truncated).is_err());
    }
}
