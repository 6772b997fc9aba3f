mod cli;

fn main() {
    cli::main_with_exit()
}
