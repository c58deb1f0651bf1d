//! End-to-end checks over the ingest -> impute -> metrics -> report chain,
//! plus a round-trip property for the CSV schema.

use declination::impute::{
    fit_partitions, resolve_groups, sensitivity_shift, FitConfig, ImputePolicy,
};
use declination::ingest::{
    group_elections, parse_results, write_records, Chamber, CycleTable, DistrictRaceRecord,
    TwoPartyShare, Winner,
};
use declination::report::{cycle_summary, election_table, persistence_rate, write_table_csv};
use declination::testutil;
use proptest::prelude::*;

fn arb_record() -> impl Strategy<Value = DistrictRaceRecord> {
    (
        prop::sample::select(vec!["PA", "OH", "TX", "WA"]),
        prop::bool::ANY,
        2010..2017i32,
        1..40u32,
        prop::option::of(0..500_000u64),
        prop::option::of(0..500_000u64),
        prop::bool::ANY,
        prop::bool::ANY,
        prop::bool::ANY,
        prop::bool::ANY,
    )
        .prop_map(
            |(state, lower, year, district, dem, rep, inc_d, inc_r, d_wins, multi)| {
                // keep the winner consistent with whatever counts exist
                let winner = match (dem, rep) {
                    (Some(d), Some(r)) if d > r => Winner::D,
                    (Some(d), Some(r)) if r > d => Winner::R,
                    _ => {
                        if d_wins {
                            Winner::D
                        } else {
                            Winner::R
                        }
                    }
                };
                DistrictRaceRecord {
                    state: state.to_owned(),
                    chamber: if lower {
                        Chamber::StateLower
                    } else {
                        Chamber::Congress
                    },
                    year,
                    district_id: format!("{district:02}"),
                    dem_votes: dem,
                    rep_votes: rep,
                    dem_incumbent: inc_d,
                    rep_incumbent: inc_r,
                    winner,
                    multi_member: multi,
                }
            },
        )
}

proptest! {
    #[test]
    fn csv_round_trip_is_lossless(records in prop::collection::vec(arb_record(), 0..60)) {
        let mut buf = Vec::new();
        write_records(&records, &mut buf).unwrap();
        let outcome = parse_results(buf.as_slice()).unwrap();
        prop_assert!(outcome.row_errors.is_empty(), "{:?}", outcome.row_errors);
        prop_assert_eq!(outcome.records, records);
    }

    #[test]
    fn grouping_partitions_every_record(records in prop::collection::vec(arb_record(), 0..60)) {
        let groups = group_elections(&records, &CycleTable::empty());
        let total: usize = groups.iter().map(|g| g.records.len()).sum();
        prop_assert_eq!(total, records.len());
        for group in &groups {
            for r in &group.records {
                prop_assert_eq!(&r.state, &group.key.state);
                prop_assert_eq!(r.chamber, group.key.chamber);
                prop_assert_eq!(r.year, group.key.year);
            }
        }
    }

    #[test]
    fn contested_shares_stay_in_unit_interval(record in arb_record()) {
        if let Ok(TwoPartyShare::Contested(share)) = record.two_party_share() {
            prop_assert!((0.0..=1.0).contains(&share));
        }
    }

    #[test]
    fn parser_never_panics_on_arbitrary_input(bytes in prop::collection::vec(any::<u8>(), 0..2000)) {
        // malformed input may error, but must not panic
        let _ = parse_results(bytes.as_slice());
    }

    #[test]
    fn parser_never_panics_on_arbitrary_rows(body in "[ -~\n,]{0,600}") {
        let header = "state,chamber,year,district,dem_votes,rep_votes,dem_incumbent,rep_incumbent,winner,multi_member\n";
        let input = format!("{header}{body}");
        if let Ok(outcome) = parse_results(input.as_bytes()) {
            for err in &outcome.row_errors {
                prop_assert!(err.line > 0);
            }
        }
    }
}

fn fixture_csv() -> String {
    let mut rows = vec![
        "state,chamber,year,district,dem_votes,rep_votes,dem_incumbent,rep_incumbent,winner,multi_member".to_owned(),
    ];
    // two PA congressional cycles' worth of races, one uncontested per year
    let mut rng = testutil::rng(404);
    use rand::Rng;
    for year in [2012, 2014, 2016] {
        for district in 1..=8 {
            let dem = rng.gen_range(60_000..140_000);
            let rep = rng.gen_range(60_000..140_000);
            if district == 5 {
                // district 5 is never contested in this cycle
                rows.push(format!(
                    "PA,congress,{year},{district:02},{dem},,false,false,D,false"
                ));
            } else {
                let winner = if dem >= rep { "D" } else { "R" };
                rows.push(format!(
                    "PA,congress,{year},{district:02},{dem},{rep},false,true,{winner},false"
                ));
            }
        }
    }
    // a sweep election and a multi-member exclusion
    rows.push("WY,congress,2012,01,,90000,false,false,R,false".to_owned());
    rows.push("WY,congress,2012,02,10000,90000,false,false,R,false".to_owned());
    rows.push("VT,state_lower,2012,01,5000,4000,false,false,D,true".to_owned());
    rows.push("VT,state_lower,2012,02,5000,4000,false,false,D,false".to_owned());
    rows.join("\n")
}

#[test]
fn batch_pipeline_resolves_imputes_and_reports() {
    let parsed = parse_results(fixture_csv().as_bytes()).unwrap();
    assert!(parsed.row_errors.is_empty());
    let groups = group_elections(&parsed.records, &CycleTable::empty());

    // the VT group is excluded for its multi-member district
    let excluded: Vec<_> = groups
        .iter()
        .filter(|g| g.exclusion_reason.is_some())
        .collect();
    assert_eq!(excluded.len(), 1);
    assert_eq!(excluded[0].key.state, "VT");

    let models = fit_partitions(&groups, &FitConfig::default()).unwrap();
    assert_eq!(models.models.len(), 1);

    let (resolved, errors) = resolve_groups(&groups, &ImputePolicy::Model(&models), 99);
    assert!(errors.is_empty(), "{errors:?}");
    // 3 PA elections + 1 WY election
    assert_eq!(resolved.len(), 4);
    for group in resolved.iter().filter(|g| g.key.state == "PA") {
        assert_eq!(group.n_imputed(), 1);
        for (&share, &imputed) in group.shares.iter().zip(&group.imputed) {
            assert!((0.0..=1.0).contains(&share));
            if imputed {
                // imputed democratic wins stay on the winning side
                assert!(share > 0.5);
            }
        }
    }

    let rows = election_table(&resolved, &[0.0, 1.0]).unwrap();
    assert_eq!(rows.len(), 4);
    let wy = rows.iter().find(|r| r.state == "WY").unwrap();
    assert_eq!(wy.delta_tilde, None);
    let pa = rows.iter().find(|r| r.state == "PA").unwrap();
    let expected = resolved
        .iter()
        .find(|g| g.key.state == "PA")
        .unwrap()
        .election()
        .metric_set(&[0.0, 1.0])
        .unwrap();
    assert_eq!(pa.declination, expected.declination);
    assert_eq!(pa.efficiency_gap, expected.efficiency_gap);

    let mut csv_out = Vec::new();
    write_table_csv(&rows, &mut csv_out).unwrap();
    let text = String::from_utf8(csv_out).unwrap();
    assert_eq!(text.lines().count(), rows.len() + 1);

    let summaries = cycle_summary(&rows);
    assert!(!summaries.is_empty());
    assert!(persistence_rate(&summaries, 1e9).is_none());

    // uniform policy and disabled policy
    let (uniform, errors) = resolve_groups(&groups, &ImputePolicy::Uniform(0.65), 0);
    assert!(errors.is_empty());
    let pa_uniform = uniform.iter().find(|g| g.key.state == "PA").unwrap();
    let imputed_share = pa_uniform
        .shares
        .iter()
        .zip(&pa_uniform.imputed)
        .find(|(_, &i)| i)
        .map(|(&s, _)| s)
        .unwrap();
    assert_eq!(imputed_share, 0.65);

    let (_, errors) = resolve_groups(&groups, &ImputePolicy::Disabled, 0);
    assert_eq!(
        errors.len(),
        4,
        "PA x3 and WY all contain uncontested races"
    );

    // shifting imputed shares moves the declination where something was
    // imputed and leaves fully contested elections alone
    let report = sensitivity_shift(&resolved, 0.03);
    assert_eq!(report.shift, 0.03);
    assert!(report.n_omitted >= 1, "the WY sweep must be omitted");
    for point in &report.points {
        assert!(point.imputed_fraction > 0.0);
        // raising an imputed democratic share without flipping the seat
        // tilts both block lines toward party Q's advantage
        assert!(point.declination_change > 0.0, "{point:?}");
    }
}

#[test]
fn contested_tie_awarded_to_democrat_moves_onto_winning_side() {
    let csv = "state,chamber,year,district,dem_votes,rep_votes,dem_incumbent,rep_incumbent,winner,multi_member\n\
               PA,congress,2012,01,100,100,false,false,D,false\n\
               PA,congress,2012,02,100,100,false,false,R,false\n\
               PA,congress,2012,03,80,120,false,false,R,false";
    let parsed = parse_results(csv.as_bytes()).unwrap();
    assert!(parsed.row_errors.is_empty());
    let groups = group_elections(&parsed.records, &CycleTable::empty());
    let (resolved, errors) = resolve_groups(&groups, &ImputePolicy::Disabled, 0);
    assert!(errors.is_empty());
    assert_eq!(resolved[0].shares, vec![0.505, 0.5, 0.4]);
}

#[test]
fn fit_partitions_split_by_chamber_and_decade() {
    let csv = "state,chamber,year,district,dem_votes,rep_votes,dem_incumbent,rep_incumbent,winner,multi_member\n\
               PA,congress,2010,01,120,100,false,false,D,false\n\
               PA,congress,2010,02,90,110,false,false,R,false\n\
               PA,congress,2012,01,130,100,false,false,D,false\n\
               PA,congress,2012,02,95,115,false,false,R,false\n\
               PA,state_lower,2012,01,70,90,false,false,R,false\n\
               PA,state_lower,2012,02,85,80,false,false,D,false";
    let parsed = parse_results(csv.as_bytes()).unwrap();
    let groups = group_elections(&parsed.records, &CycleTable::empty());
    let models = fit_partitions(&groups, &FitConfig::default()).unwrap();
    // congress splits across the 2002 and 2012 cycles; state_lower adds one
    assert_eq!(models.models.len(), 3);
    let congress_2010 = models.find(Chamber::Congress, 2010).unwrap();
    assert_eq!(congress_2010.cycle_start, 2002);
    assert_eq!(congress_2010.n_obs, 2);
    let congress_2012 = models.find(Chamber::Congress, 2014).unwrap();
    assert_eq!(congress_2012.cycle_start, 2012);
    let lower = models.find(Chamber::StateLower, 2012).unwrap();
    assert_eq!(lower.chamber, Chamber::StateLower);
    assert!(models.find(Chamber::Congress, 1990).is_none());
}

#[test]
fn missing_model_partition_is_reported_per_group() {
    let csv = "state,chamber,year,district,dem_votes,rep_votes,dem_incumbent,rep_incumbent,winner,multi_member\n\
               PA,congress,2012,01,,90000,false,false,R,false\n\
               PA,congress,2012,02,80000,90000,false,false,R,false";
    let parsed = parse_results(csv.as_bytes()).unwrap();
    let groups = group_elections(&parsed.records, &CycleTable::empty());
    // a model set fitted from nothing has no partitions
    let models = fit_partitions(&[], &FitConfig::default()).unwrap();
    let (resolved, errors) = resolve_groups(&groups, &ImputePolicy::Model(&models), 0);
    assert!(resolved.is_empty());
    assert_eq!(errors.len(), 1);
    assert!(errors[0].reason.contains("no fitted model"));
}
