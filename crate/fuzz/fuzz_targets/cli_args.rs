#![no_main]

use clap::Parser;
use dyson_cli::Cli;
use libfuzzer_sys::fuzz_target;

// Argument parsing only; commands are not executed.
fuzz_target!(|text: &str| {
    let args = std::iter::once("dyson").chain(text.split_whitespace());
    let _ = Cli::try_parse_from(args);
});
