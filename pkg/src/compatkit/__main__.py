from compatkit.cli import main

main()
