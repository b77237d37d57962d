#![no_main]
use libfuzzer_sys::fuzz_target;
use prefbo::{ExperimentState, StateDocument};
use prefbo_service::api::{parse_body, CreateSession, PostPreference};

fuzz_target!(|data: &[u8]| {
    if let Ok(req) = parse_body::<CreateSession>(data) {
        if let Some(h) = &req.hyper {
            let _ = h.apply(&req.bbox).validate();
        }
    }
    let _ = parse_body::<PostPreference>(data);
    if let Ok(doc) = parse_body::<StateDocument>(data) {
        let _ = ExperimentState::from_document(doc);
    }
});
