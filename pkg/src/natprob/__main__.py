from natprob.cli import main

raise SystemExit(main())
