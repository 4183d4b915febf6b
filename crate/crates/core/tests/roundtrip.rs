use proptest::prelude::*;
use recurvis::cohort::{load_cohort, write_cohort};
use recurvis::{Cohort, CovariateRegistry, Subject, Visit, VisitKind};

fn subject(index: usize) -> impl Strategy<Value = Subject> {
    (0.1f64..10.0, -5.0f64..5.0, prop::collection::vec((0.0f64..1.0, any::<bool>(), -3.0f64..3.0, prop::option::of(-1e3f64..1e3)), 0..6))
        .prop_map(move |(censor, base, raw)| {
            let mut times: Vec<f64> = raw.iter().map(|r| censor * (1.0 - r.0)).collect();
            times.sort_by(f64::total_cmp);
            times.dedup();
            let visits = times
                .iter()
                .zip(&raw)
                .map(|(&time, &(_, event, a, b))| Visit {
                    time,
                    kind: if event { VisitKind::Event } else { VisitKind::Nonevent },
                    covariates: vec![a, b.unwrap_or(f64::NAN)].into(),
                })
                .collect();
            Subject {
                id: format!("id{index}"),
                censor_time: censor,
                baseline: vec![base].into(),
                visits,
            }
        })
}

fn cohort() -> impl Strategy<Value = Cohort> {
    (2usize..12)
        .prop_flat_map(|n| (0..n).map(subject).collect::<Vec<_>>())
        .prop_map(|subjects| {
            let registry = CovariateRegistry::new(vec!["age".into()], vec!["crp".into(), "dose".into()]).unwrap();
            Cohort::new(subjects, registry, None).unwrap()
        })
}

proptest! {
    #[test]
    fn csv_round_trip_is_exact(c in cohort()) {
        let (mut s, mut v) = (Vec::new(), Vec::new());
        write_cohort(&c, &mut s, &mut v).unwrap();
        let back = load_cohort(s.as_slice(), v.as_slice(), None).unwrap();
        prop_assert_eq!(back, c);
    }

    #[test]
    fn resampling_keeps_subject_records(c in cohort(), picks in prop::collection::vec(any::<prop::sample::Index>(), 2..20)) {
        let indices: Vec<usize> = picks.iter().map(|p| p.index(c.n())).collect();
        let r = c.resample(&indices).unwrap();
        prop_assert_eq!(r.n(), indices.len());
        for (s, &i) in r.subjects().iter().zip(&indices) {
            prop_assert_eq!(&s.visits, &c.subjects()[i].visits);
            prop_assert_eq!(s.censor_time, c.subjects()[i].censor_time);
        }
    }
}
