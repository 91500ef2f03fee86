import hypothesis

hypothesis.settings.register_profile(
    "artifact", deadline=None, max_examples=40, print_blob=False
)
hypothesis.settings.load_profile("artifact")
