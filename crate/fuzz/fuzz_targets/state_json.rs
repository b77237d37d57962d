#![no_main]
use libfuzzer_sys::fuzz_target;
use prefbo::ExperimentState;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(state) = ExperimentState::from_json(text) {
        let json = state.to_json().expect("valid state serializes");
        let again = ExperimentState::from_json(&json).expect("serialized state reloads");
        assert_eq!(again.to_json().unwrap(), json);
    }
});
