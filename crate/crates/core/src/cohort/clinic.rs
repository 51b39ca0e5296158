use std::collections::BTreeMap;

use super::process::{EmissionSpec, GroundTruthProcess, ProcessSpec, StateSpec, TransitionSpec};
use crate::pht::{DAY, HOUR, MINUTE};

/// Transition with a log-normal gap given by its median in seconds.
fn t(to: &str, p: f64, median: f64, sigma: f64) -> TransitionSpec {
    TransitionSpec { to: to.into(), p, gap_mu: median.ln(), gap_sigma: sigma }
}

fn state(name: &str, event: &str, payload: EmissionSpec, transitions: Vec<TransitionSpec>) -> StateSpec {
    StateSpec { name: name.into(), event: event.into(), terminal: false, payload, transitions }
}

fn terminal(name: &str, event: &str, payload: EmissionSpec) -> StateSpec {
    StateSpec { name: name.into(), event: event.into(), terminal: true, payload, transitions: vec![] }
}

fn normal(means: &[f64], sds: &[f64]) -> EmissionSpec {
    EmissionSpec::Normal { means: means.to_vec(), sds: sds.to_vec() }
}

fn codes(c: &[&str]) -> EmissionSpec {
    EmissionSpec::Categorical { codes: c.iter().map(|s| s.to_string()).collect(), weights: None }
}

/// The default benchmark process: 12 states, 6 event names, 3 scalar
/// variables, 2 code families and 2 static attributes.
///
/// Ward stability is hidden: both ward states emit `LAB` and differ only in
/// their lab distributions. Discharge states are identifiable from their
/// codes.
pub fn clinic_v1() -> GroundTruthProcess {
    let first_lab = 40.0 * MINUTE;
    let ward = 8.0 * HOUR;
    let icu = 6.0 * HOUR;
    let discharge = DAY;
    let in_hospital_death = 2.0 * DAY;
    let readmit = 20.0 * DAY;
    let done = 45.0 * DAY;
    let late_death = 30.0 * DAY;

    let states = vec![
        state(
            "INTAKE",
            "CLINIC_VISIT",
            normal(&[128.0], &[18.0]),
            vec![
                t("ADMIT_ELECTIVE", 0.5, 3.0 * DAY, 1.0),
                t("ADMIT_URGENT", 0.4, 3.0 * DAY, 1.0),
                t("DONE", 0.1, done, 0.9),
            ],
        ),
        state(
            "ADMIT_ELECTIVE",
            "ADMISSION",
            codes(&["K35.80", "M17.11"]),
            vec![
                t("WARD_STABLE", 0.8, first_lab, 1.0),
                t("WARD_UNSTABLE", 0.15, first_lab, 1.0),
                t("ICU", 0.05, icu, 1.0),
            ],
        ),
        state(
            "ADMIT_URGENT",
            "ADMISSION",
            codes(&["I50.9", "J18.9"]),
            vec![
                t("WARD_STABLE", 0.35, first_lab, 1.0),
                t("WARD_UNSTABLE", 0.45, first_lab, 1.0),
                t("ICU", 0.2, icu, 1.0),
            ],
        ),
        state(
            "WARD_STABLE",
            "LAB",
            normal(&[1.0, 1.3], &[0.3, 0.5]),
            vec![
                t("WARD_STABLE", 0.35, ward, 0.9),
                t("WARD_UNSTABLE", 0.08, ward, 0.9),
                t("ICU", 0.02, icu, 1.0),
                t("DISCH_HOME", 0.45, discharge, 0.8),
                t("DISCH_FACILITY", 0.09, discharge, 0.8),
                t("DEATH", 0.01, in_hospital_death, 1.0),
            ],
        ),
        state(
            "WARD_UNSTABLE",
            "LAB",
            normal(&[1.9, 3.2], &[0.6, 1.1]),
            vec![
                t("WARD_UNSTABLE", 0.3, ward, 0.9),
                t("WARD_STABLE", 0.2, ward, 0.9),
                t("ICU", 0.22, icu, 1.0),
                t("DISCH_FACILITY", 0.1, discharge, 0.8),
                t("DISCH_HOME", 0.08, discharge, 0.8),
                t("DEATH", 0.1, in_hospital_death, 1.0),
            ],
        ),
        state(
            "ICU",
            "ICU_ADMISSION",
            EmissionSpec::None,
            vec![
                t("WARD_STABLE", 0.25, icu, 1.0),
                t("WARD_UNSTABLE", 0.35, icu, 1.0),
                t("DISCH_HOSPICE", 0.1, discharge, 0.8),
                t("DISCH_FACILITY", 0.1, discharge, 0.8),
                t("DEATH", 0.2, in_hospital_death, 1.0),
            ],
        ),
        state(
            "DISCH_HOME",
            "DISCHARGE",
            codes(&["D05.291", "D06.392"]),
            vec![
                t("READMIT", 0.12, readmit, 0.9),
                t("DONE", 0.86, done, 0.9),
                t("DEATH", 0.02, late_death, 1.0),
            ],
        ),
        state(
            "DISCH_FACILITY",
            "DISCHARGE",
            codes(&["D04.177", "D08.470"]),
            vec![
                t("READMIT", 0.30, readmit, 0.9),
                t("DONE", 0.60, done, 0.9),
                t("DEATH", 0.10, late_death, 1.0),
            ],
        ),
        state(
            "DISCH_HOSPICE",
            "DISCHARGE",
            codes(&["D18.871"]),
            vec![t("DEATH", 0.75, late_death, 1.0), t("DONE", 0.25, done, 0.9)],
        ),
        state(
            "READMIT",
            "ADMISSION",
            codes(&["N17.9", "A41.9"]),
            vec![
                t("WARD_STABLE", 0.3, first_lab, 1.0),
                t("WARD_UNSTABLE", 0.5, first_lab, 1.0),
                t("ICU", 0.2, icu, 1.0),
            ],
        ),
        terminal("DONE", "CLINIC_VISIT", normal(&[124.0], &[16.0])),
        terminal("DEATH", "DEATH", EmissionSpec::None),
    ];

    let mut static_priors = BTreeMap::new();
    static_priors.insert("SEX".to_string(), BTreeMap::from([("F".to_string(), 0.52), ("M".to_string(), 0.48)]));
    static_priors.insert(
        "AGE".to_string(),
        BTreeMap::from([
            ("18-39".to_string(), 0.25),
            ("40-64".to_string(), 0.4),
            ("65+".to_string(), 0.35),
        ]),
    );
    let spec = ProcessSpec { name: "clinic-v1".into(), start: "INTAKE".into(), seed: 20_240_601, static_priors, states };
    GroundTruthProcess::new(spec).expect("clinic-v1 is a valid process")
}
