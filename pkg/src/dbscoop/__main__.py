from dbscoop.cli import main

raise SystemExit(main())
