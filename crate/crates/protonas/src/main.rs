use protonas::config::SEED_ENV;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let env_seed = std::env::var(SEED_ENV).ok();
    std::process::exit(protonas::cli::run(std::env::args_os(), env_seed.as_deref()));
}
