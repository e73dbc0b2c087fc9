fn main() {
    let args: Vec<_> = std::env::args_os().collect();
    let verbose = args.iter().filter(|a| *a == "-v" || *a == "--verbose").count()
        + args.iter().filter_map(|a| a.to_str()).filter(|a| a.starts_with("-vv")).map(|a| a.len() - 1).sum::<usize>();
    ditcheck_cli::app::init_logging(verbose.min(255) as u8);
    let code = ditcheck_cli::run(args, &mut std::io::stdout(), &mut std::io::stderr());
    std::process::exit(code);
}
