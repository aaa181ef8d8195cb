//! Name and value pools for generated reports.

pub const BACKGROUND_APIS: &[&str] = &[
    "NtClose",
    "NtOpenFile",
    "NtCreateFile",
    "NtReadFile",
    "NtWriteFile",
    "NtQueryInformationFile",
    "NtSetInformationFile",
    "NtQueryDirectoryFile",
    "NtQueryAttributesFile",
    "NtQueryFullAttributesFile",
    "NtDeviceIoControlFile",
    "NtFsControlFile",
    "NtOpenKey",
    "NtOpenKeyEx",
    "NtCreateKey",
    "NtQueryKey",
    "NtQueryValueKey",
    "NtSetValueKey",
    "NtEnumerateKey",
    "NtEnumerateValueKey",
    "NtDeleteKey",
    "NtDeleteValueKey",
    "NtOpenProcess",
    "NtOpenThread",
    "NtQueryInformationProcess",
    "NtQueryInformationThread",
    "NtSetInformationProcess",
    "NtSetInformationThread",
    "NtQuerySystemInformation",
    "NtAllocateVirtualMemory",
    "NtFreeVirtualMemory",
    "NtProtectVirtualMemory",
    "NtReadVirtualMemory",
    "NtWriteVirtualMemory",
    "NtQueryVirtualMemory",
    "NtCreateMutant",
    "NtOpenMutant",
    "NtReleaseMutant",
    "NtCreateEvent",
    "NtOpenEvent",
    "NtSetEvent",
    "NtWaitForSingleObject",
    "NtWaitForMultipleObjects",
    "NtDelayExecution",
    "NtQueryPerformanceCounter",
    "NtQuerySystemTime",
    "NtYieldExecution",
    "NtDuplicateObject",
    "NtQueryObject",
    "NtOpenDirectoryObject",
    "NtOpenSymbolicLinkObject",
    "NtQuerySymbolicLinkObject",
    "NtCreateSemaphore",
    "NtOpenSection",
    "NtQuerySection",
    "NtTestAlert",
    "NtFlushBuffersFile",
    "NtLockFile",
    "NtUnlockFile",
    "NtNotifyChangeKey",
    "NtOpenProcessToken",
    "NtOpenThreadToken",
    "NtQueryInformationToken",
    "NtAdjustPrivilegesToken",
    "NtAccessCheck",
    "NtQueryDefaultLocale",
    "NtQueryDefaultUILanguage",
    "NtQueryInstallUILanguage",
    "NtPowerInformation",
    "NtQueryVolumeInformationFile",
    "LdrLoadDll",
    "LdrUnloadDll",
    "LdrGetDllHandle",
    "LdrGetDllHandleEx",
    "LdrGetProcedureAddress",
    "LdrGetProcedureAddressForCaller",
    "LdrQueryImageFileExecutionOptions",
    "RtlAllocateHeap",
    "RtlFreeHeap",
    "RtlReAllocateHeap",
    "RtlCreateHeap",
    "RtlSizeHeap",
    "RtlInitUnicodeString",
    "RtlInitAnsiString",
    "RtlDosPathNameToNtPathName_U",
    "RtlGetVersion",
    "RtlQueryEnvironmentVariable",
    "RtlSetCurrentDirectory_U",
    "RtlGetFullPathName_U",
    "RtlCompareMemory",
    "RtlDecompressBuffer",
    "RtlComputeCrc32",
    "RtlAddVectoredExceptionHandler",
    "RtlRemoveVectoredExceptionHandler",
    "GetSystemTimeAsFileTime",
    "GetSystemTime",
    "GetLocalTime",
    "GetTickCount",
    "GetTickCount64",
    "QueryPerformanceCounter",
    "GetSystemInfo",
    "GetNativeSystemInfo",
    "GetComputerNameW",
    "GetComputerNameA",
    "GetUserNameW",
    "GetUserNameA",
    "GetVersionExW",
    "GetVersionExA",
    "GetSystemDirectoryW",
    "GetSystemDirectoryA",
    "GetSystemWindowsDirectoryW",
    "GetTempPathW",
    "GetTempFileNameW",
    "GetFileAttributesW",
    "GetFileAttributesExW",
    "SetFileAttributesW",
    "GetFileSize",
    "GetFileSizeEx",
    "GetFileType",
    "GetFileInformationByHandle",
    "SetFilePointer",
    "SetFilePointerEx",
    "SetEndOfFile",
    "CreateDirectoryW",
    "RemoveDirectoryW",
    "DeleteFileW",
    "CopyFileW",
    "CopyFileExW",
    "MoveFileWithProgressW",
    "FindFirstFileExW",
    "FindNextFileW",
    "FindClose",
    "SearchPathW",
    "GetShortPathNameW",
    "GetVolumeNameForVolumeMountPointW",
    "GetVolumePathNameW",
    "GetDiskFreeSpaceExW",
    "GetDriveTypeW",
    "GetLogicalDrives",
    "DeviceIoControl",
    "CreateProcessInternalW",
    "ShellExecuteExW",
    "CreateThread",
    "CreateRemoteThread",
    "ExitProcess",
    "ExitThread",
    "TerminateProcess",
    "OpenSCManagerW",
    "OpenServiceW",
    "StartServiceW",
    "ControlService",
    "CloseServiceHandle",
    "RegOpenKeyExW",
    "RegOpenKeyExA",
    "RegCreateKeyExW",
    "RegQueryValueExW",
    "RegQueryValueExA",
    "RegSetValueExW",
    "RegSetValueExA",
    "RegEnumKeyExW",
    "RegEnumValueW",
    "RegQueryInfoKeyW",
    "RegDeleteKeyW",
    "RegDeleteValueW",
    "RegCloseKey",
    "CoInitializeEx",
    "CoUninitialize",
    "CoCreateInstance",
    "CoGetClassObject",
    "OleInitialize",
    "OleUninitialize",
    "CryptAcquireContextW",
    "CryptReleaseContext",
    "CryptCreateHash",
    "CryptHashData",
    "CryptDestroyHash",
    "CryptGenRandom",
    "CryptProtectData",
    "CryptUnprotectData",
    "InternetOpenW",
    "InternetOpenUrlW",
    "InternetReadFile",
    "InternetCloseHandle",
    "InternetConnectW",
    "HttpOpenRequestW",
    "HttpSendRequestW",
    "WSAStartup",
    "WSACleanup",
    "socket",
    "connect",
    "send",
    "recv",
    "closesocket",
    "getaddrinfo",
    "gethostbyname",
    "DnsQuery_W",
    "GetAdaptersAddresses",
    "GetAdaptersInfo",
    "FindWindowW",
    "FindWindowExW",
    "GetForegroundWindow",
    "GetWindowTextW",
    "EnumWindows",
    "GetCursorPos",
    "SetWindowsHookExW",
    "UnhookWindowsHookEx",
    "GetAsyncKeyState",
    "GetKeyState",
    "GetKeyboardState",
    "MessageBoxTimeoutW",
    "LoadStringW",
    "DrawTextExW",
    "LoadResource",
    "FindResourceExW",
    "SizeofResource",
    "GlobalMemoryStatusEx",
    "IsDebuggerPresent",
    "OutputDebugStringA",
    "SetErrorMode",
    "SetUnhandledExceptionFilter",
    "GetCurrentHwProfileW",
    "SHGetFolderPathW",
    "SHGetSpecialFolderLocation",
];

pub const FILE_PATHS: &[&str] = &[
    "C:\\Windows\\System32\\kernel32.dll",
    "C:\\Windows\\System32\\ntdll.dll",
    "C:\\Windows\\System32\\drivers\\etc\\hosts",
    "C:\\Windows\\win.ini",
    "C:\\Windows\\Fonts\\arial.ttf",
    "C:\\Windows\\Globalization\\Sorting\\sortdefault.nls",
    "C:\\Program Files\\Common Files\\System\\ado\\msado15.dll",
    "C:\\Users\\user\\AppData\\Local\\Temp\\~DF3A1.tmp",
    "C:\\Users\\user\\AppData\\Roaming\\Microsoft\\Windows\\Recent",
    "C:\\Users\\user\\Desktop\\desktop.ini",
    "C:\\ProgramData\\Microsoft\\Windows\\Start Menu\\Programs",
    "\\??\\C:\\Windows\\SysWOW64\\msvcrt.dll",
    "\\Device\\KsecDD",
    "\\??\\MountPointManager",
];

pub const DLL_NAMES: &[&str] = &[
    "kernel32.dll",
    "ntdll.dll",
    "KERNELBASE.dll",
    "ADVAPI32.dll",
    "USER32.dll",
    "GDI32.dll",
    "SHELL32.dll",
    "ole32.dll",
    "OLEAUT32.dll",
    "WS2_32.dll",
    "WININET.dll",
    "CRYPT32.dll",
    "IMM32.DLL",
    "MSCTF.dll",
    "uxtheme.dll",
    "dwmapi.dll",
    "version.dll",
    "comctl32.dll",
];

pub const REGISTRY_KEYS: &[&str] = &[
    "HKEY_LOCAL_MACHINE\\SOFTWARE\\Microsoft\\Windows NT\\CurrentVersion",
    "HKEY_LOCAL_MACHINE\\SYSTEM\\ControlSet001\\Control\\Session Manager",
    "HKEY_LOCAL_MACHINE\\SOFTWARE\\Policies\\Microsoft\\Windows\\Safer\\CodeIdentifiers",
    "HKEY_CURRENT_USER\\Software\\Microsoft\\Windows\\CurrentVersion\\Explorer\\Shell Folders",
    "HKEY_CURRENT_USER\\Control Panel\\International",
    "HKEY_LOCAL_MACHINE\\SYSTEM\\ControlSet001\\Control\\Nls\\CustomLocale",
    "HKEY_LOCAL_MACHINE\\SOFTWARE\\Microsoft\\Ole",
    "HKEY_CURRENT_USER\\Software\\Classes\\Local Settings",
];

pub const URLS: &[&str] = &[
    "http://www.msftconnecttest.com/connecttest.txt",
    "http://crl.microsoft.com/pki/crl/products/microsoftrootcert.crl",
    "https://www.google.com/",
    "http://ctldl.windowsupdate.com/msdownload/update/v3/static/trustedr/en/authrootstl.cab",
    "https://login.live.com/",
];

pub const OTHER_STRINGS: &[&str] = &[
    "explorer",
    "SeDebugPrivilege",
    "Global\\MsWinZonesCacheCounterMutexA",
    "Local\\SM0:1234:168:WilStaging_02",
    "en-US",
    "svchost",
    "DisableUserModeCallbackFilter",
    "ProductName",
];

pub const STRING_ARG_NAMES: &[(&str, usize)] = &[
    ("FileName", 0),
    ("ModuleName", 1),
    ("KeyName", 2),
    ("URL", 3),
    ("ValueName", 4),
];

pub const INTEGER_ARG_NAMES: &[&str] = &[
    "Flags",
    "Size",
    "Length",
    "DesiredAccess",
    "ShareAccess",
    "CreateDisposition",
    "Protection",
    "Milliseconds",
    "Ordinal",
    "ProcessId",
    "ThreadId",
    "Type",
];

pub const ADDRESS_ARG_NAMES: &[&str] = &[
    "BaseAddress",
    "ModuleHandle",
    "FunctionAddress",
    "Buffer",
    "StartAddress",
    "HeapHandle",
];

/// Family names used by the planted corpora.
pub const FAMILY_NAMES: &[&str] = &[
    "Adload", "Emotet", "Lokibot", "Qakbot", "Trickbot", "Ursnif", "Zloader", "Dridex",
];

/// APIs reserved for planted motifs. Disjoint from [`BACKGROUND_APIS`].
pub const MOTIF_APIS: &[&str] = &[
    "NtCreateSection",
    "NtMapViewOfSection",
    "NtUnmapViewOfSection",
    "NtQueueApcThread",
    "NtSuspendThread",
    "NtResumeThread",
    "NtGetContextThread",
    "NtSetContextThread",
    "NtCreateThreadEx",
    "NtCreateUserProcess",
    "NtLoadDriver",
    "NtRaiseHardError",
    "SetFileTime",
    "CryptEncrypt",
    "CryptDecrypt",
    "NtSetSystemInformation",
    "NtShutdownSystem",
    "NtMakeTemporaryObject",
];
