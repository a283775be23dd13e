# Subcommands package
