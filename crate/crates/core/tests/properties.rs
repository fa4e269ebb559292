//! Invariants over randomly generated matrices, protein maps and datasets.

mod common;

use lfq_core::ingest::ProteinMap;
use lfq_core::matrix::{Group, Level, Measure, QuantMatrix, SampleColumn};
use lfq_core::pipeline::{level_matrix, quantify, resolve_classes, row_ws, run_layout, PipelineConfig};
use lfq_core::quant::normalize;
use lfq_core::rollup::{protein_elements, rollup_matrix};
use lfq_core::simulate::{simulate, Preset, SimConfig};
use lfq_core::stats::{permutation_test, wilcoxon_w, MissingPolicy, RankGroup, TestSettings};
use proptest::prelude::*;

const SEQUENCES: [&str; 6] = ["AAK", "CDEK", "FGHR", "IKLMK", "NPQR", "STVWYK"];

/// Species on a handful of sequences (two charges each), a protein map that
/// may share sequences across proteins, and cells that may be missing.
fn dataset(measure: Measure) -> impl Strategy<Value = (QuantMatrix, ProteinMap)> {
    let species: Vec<String> = SEQUENCES
        .iter()
        .flat_map(|s| [format!("{s}+2"), format!("{s}+3")])
        .collect();
    let n = species.len();
    let value = move || -> BoxedStrategy<Option<f64>> {
        match measure {
            Measure::SpectralCount => prop::option::weighted(0.8, (0u32..20).prop_map(f64::from)).boxed(),
            Measure::IonAbundance => prop::option::weighted(0.8, 1.0f64..1e6).boxed(),
        }
    };
    (
        prop::collection::vec(prop::collection::vec(value(), 6), n),
        prop::collection::vec(prop::collection::btree_set(0usize..3, 1..=2), SEQUENCES.len()),
    )
        .prop_map(move |(cells, owners)| {
            let samples = (0..6)
                .map(|j| SampleColumn::new(format!("s{j}"), if j < 3 { Group::Case } else { Group::Control }))
                .collect();
            let m = QuantMatrix::new(measure, Level::Species, species.clone(), samples, cells).unwrap();
            let mut pm = ProteinMap::new();
            for (seq, set) in SEQUENCES.iter().zip(owners) {
                for p in set {
                    pm.insert(*seq, format!("PRT{p}"));
                }
            }
            (m, pm)
        })
}

fn any_dataset() -> impl Strategy<Value = (QuantMatrix, ProteinMap)> {
    prop_oneof![dataset(Measure::SpectralCount), dataset(Measure::IonAbundance)]
}

fn column_stat(m: &QuantMatrix, j: usize) -> f64 {
    let present: Vec<f64> = m.column(j).flatten().collect();
    match m.measure {
        Measure::SpectralCount => present.iter().sum(),
        Measure::IonAbundance => common::median(&present),
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn normalization_equalizes_and_is_idempotent((m, _) in any_dataset()) {
        prop_assume!((0..m.n_samples()).all(|j| column_stat(&m, j) > 0.0));
        let once = normalize(&m).unwrap();
        let twice = normalize(&once).unwrap();
        let target = column_stat(&once, 0);
        for j in 0..m.n_samples() {
            prop_assert!(close(column_stat(&once, j), target, 1e-9));
        }
        for i in 0..m.n_entities() {
            for (a, b) in once.row(i).iter().zip(twice.row(i)) {
                prop_assert_eq!(a.is_some(), b.is_some());
                if let (Some(a), Some(b)) = (a, b) {
                    prop_assert!(close(*a, *b, 1e-9));
                }
            }
            let present = |r: &[Option<f64>]| r.iter().map(Option::is_some).collect::<Vec<_>>();
            prop_assert_eq!(present(m.row(i)), present(once.row(i)));
        }
    }

    #[test]
    fn rollup_through_peptides_matches_direct_rollup((m, pm) in any_dataset()) {
        let direct = rollup_matrix(&m, Level::Protein, &pm).unwrap();
        let peptides = rollup_matrix(&m, Level::Peptide, &pm).unwrap();
        let staged = rollup_matrix(&peptides, Level::Protein, &pm).unwrap();
        prop_assert_eq!(direct.entities(), staged.entities());
        for i in 0..direct.n_entities() {
            for (a, b) in direct.row(i).iter().zip(staged.row(i)) {
                match (a, b) {
                    (Some(a), Some(b)) if m.measure == Measure::SpectralCount => prop_assert_eq!(a, b),
                    (Some(a), Some(b)) => prop_assert!(close(*a, *b, 1e-9)),
                    (None, None) => {}
                    _ => prop_assert!(false, "presence differs"),
                }
            }
        }
        // A protein's present total is the sum over the species it owns.
        for (i, protein) in direct.entities().iter().enumerate() {
            for j in 0..m.n_samples() {
                let expected: f64 = m
                    .entities()
                    .iter()
                    .enumerate()
                    .filter(|(_, e)| {
                        let seq = e.split('+').next().unwrap();
                        pm.proteins_for(seq).is_some_and(|s| s.contains(protein))
                    })
                    .filter_map(|(k, _)| m.get(k, j))
                    .sum();
                prop_assert!(close(direct.get(i, j).unwrap_or(0.0), expected, 1e-12));
            }
        }
    }

    #[test]
    fn tau_is_bounded_and_equals_w_for_single_elements(
        (m, pm) in any_dataset(),
        exclude in any::<bool>(),
        level in prop_oneof![Just(Level::Species), Just(Level::Peptide), Just(Level::Protein)],
    ) {
        let policy = if exclude { MissingPolicy::Exclude } else { MissingPolicy::ZeroFill };
        let settings = TestSettings { permutations: 50, policy, ..TestSettings::default() };
        let lm = rollup_matrix(&m, level, &pm).unwrap();
        let elements = protein_elements(&pm, &lm).unwrap();
        let results = permutation_test(&lm, &elements, &settings).unwrap();
        let ws = row_ws(&lm, policy, RankGroup::Case);
        for r in &results {
            prop_assert!((-1.0..=1.0).contains(&r.tau));
            prop_assert!(r.p_value > 0.0 && r.p_value <= 1.0);
            if level == Level::Protein {
                prop_assert_eq!(r.k, 1);
                prop_assert_eq!(Some(r.tau), ws[lm.entity_index(&r.protein).unwrap()]);
            }
        }
    }

    #[test]
    fn w_is_antisymmetric_and_bounded(
        a in prop::collection::vec(0u8..6, 1..6),
        b in prop::collection::vec(0u8..6, 1..6),
    ) {
        let a: Vec<f64> = a.into_iter().map(f64::from).collect();
        let b: Vec<f64> = b.into_iter().map(f64::from).collect();
        let ab = wilcoxon_w(&a, &b).unwrap().w;
        let ba = wilcoxon_w(&b, &a).unwrap().w;
        prop_assert!((-1.0..=1.0).contains(&ab));
        prop_assert_eq!(ab, -ba);
        prop_assert_eq!(ab, common::w_by_pairs(&a, &b));
    }
}

fn tiny(seed: u64) -> SimConfig {
    SimConfig {
        seed,
        proteins: 6,
        differential: 2,
        biological: 3,
        run_length: 900.0,
        semi_tryptic_injection: 0.1,
        ..SimConfig::preset(Preset::Biatech)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn simulation_is_a_function_of_the_seed(seed in any::<u64>()) {
        let (a, b) = (simulate(&tiny(seed)), simulate(&tiny(seed)));
        prop_assert_eq!(&a.identifications, &b.identifications);
        prop_assert_eq!(&a.rasters, &b.rasters);
        prop_assert_eq!(&a.truth, &b.truth);
        prop_assert_eq!(&a.protein_map, &b.protein_map);
    }

    #[test]
    fn abundances_are_a_subset_of_counts(seed in any::<u64>()) {
        let data = simulate(&tiny(seed));
        let cfg = PipelineConfig::default();
        let (case, control) = resolve_classes(&data.samples, &cfg).unwrap();
        let layout = run_layout(&data.samples, &case, &control).unwrap();
        let q = quantify(&data.identifications, &data.rasters_by_run(), &layout, &cfg).unwrap();
        let counts = &q.raw[&Measure::SpectralCount];
        let abundance = &q.raw[&Measure::IonAbundance];
        prop_assert_eq!(counts.entities(), abundance.entities());
        for i in 0..abundance.n_entities() {
            for j in 0..abundance.n_samples() {
                if abundance.get(i, j).is_some() {
                    prop_assert!(counts.get(i, j).is_some_and(|c| c >= 1.0));
                }
            }
        }
        // Normalized protein totals agree across samples after rollup.
        let protein = level_matrix(&q.species[&Measure::SpectralCount], Level::Protein, &data.protein_map).unwrap();
        let totals: Vec<f64> = (0..protein.n_samples()).map(|j| protein.column(j).flatten().sum()).collect();
        prop_assert!(totals.iter().all(|t| close(*t, totals[0], 1e-9)));
    }
}
