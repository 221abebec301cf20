// Placeholder entry point; subcommands land once the pipeline modules exist.
int main() { return 0; }
