// placeholder while the desk config is calibrated
int main() { return 0; }
