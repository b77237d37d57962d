#![no_main]
use libfuzzer_sys::fuzz_target;
use prefbo::benchmark::{read_summary, read_trace, summarize, write_trace};

fuzz_target!(|data: &[u8]| {
    let _ = read_summary(data);
    if let Ok(rows) = read_trace(data) {
        let mut buf = Vec::new();
        write_trace(&rows, &mut buf).expect("parsed rows serialize");
        assert_eq!(read_trace(buf.as_slice()).expect("written trace reparses"), rows);
        let _ = summarize(&rows);
    }
});
