#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    toxpipe_fuzz::config_parse(data);
});
