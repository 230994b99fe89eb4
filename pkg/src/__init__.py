# Room geometry estimation package