"""atlaslib - local quantile regression and center-outward quantile atlases."""
