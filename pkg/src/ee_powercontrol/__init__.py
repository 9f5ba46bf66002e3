def main() -> None:
    from wsee_unfold.cli_app import main as wsee_main

    wsee_main()
